use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
}

impl ScenarioError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        ScenarioError::Validation(msg.into())
    }

    pub(crate) fn from_toml(err: &toml::de::Error, text: &str) -> Self {
        let (line, column) = match err.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
                (line, column)
            }
            None => (0, 0),
        };
        ScenarioError::Parse {
            line,
            column,
            message: err.message().to_string(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid simulation setup: {0}")]
    Invalid(String),
}

/// Row-level trajectory problems. `row` is the 1-based line number in the
/// source text.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("row {row}: malformed row: {message}")]
    Malformed { row: usize, message: String },
    #[error("row {row}: unknown lane (edge {edge}, lane index {lane_index})")]
    UnknownLane {
        row: usize,
        edge: u32,
        lane_index: usize,
    },
    #[error("row {row}: {message}")]
    Invariant { row: usize, message: String },
    #[error("row {row}: duplicate vehicle {vehicle} at timestep {time_s}")]
    Duplicate { row: usize, vehicle: u64, time_s: f64 },
    #[error("row {row}: timestep {time_s} is not on a constant step grid")]
    NonConstantStep { row: usize, time_s: f64 },
    #[error("missing or invalid header row")]
    MissingHeader,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("observer vehicle {0} not found in snapshot")]
    EgoNotFound(u64),
    #[error("invalid sensor configuration: {0}")]
    InvalidSensor(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("expected a {expected} observation, got {actual}")]
    WrongObserverKind {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("observation has an empty detection zone")]
    EmptyZone,
    #[error("scope contains no lanes")]
    EmptyScope,
    #[error("lane {0} has no cluster assignment")]
    UnmappedLane(u32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("no lanes with observations to cluster")]
    NoLanes,
    #[error("requested {k} clusters but only {lanes} lanes are available")]
    TooManyClusters { k: usize, lanes: usize },
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("empty k range")]
    EmptyRange,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("penetration rate must satisfy 0 < p <= 100, got {0}")]
    Penetration(f64),
    #[error("MO fraction must lie in [0, 1], got {0}")]
    Split(f64),
    #[error("aggregation interval {t_agg_s} s is not a positive multiple of step {step_s} s")]
    Aggregation { t_agg_s: f64, step_s: f64 },
}
