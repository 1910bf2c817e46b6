//! Scenario files: one TOML document drives every pipeline stage.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::AggregationConfig;
use crate::detection::{default_sensor_profile, LaneRelation, RangePair, SensorConfig, SensorProfile};
use crate::error::ScenarioError;
use crate::estimation::Source;
use crate::network::{NetworkSpec, RoadNetwork};
use crate::observers::ObserverPolicy;
use crate::sim::DemandSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkSpec,
    #[serde(default)]
    pub demand: DemandSpec,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub aggregation: AggregationConfig,
    #[serde(default = "default_policy")]
    pub observers: ObserverPolicy,
    #[serde(default)]
    pub sensors: SensorsSection,
    #[serde(default)]
    pub clustering: ClusteringSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_policy() -> ObserverPolicy {
    ObserverPolicy::new(10.0, 0.5, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    #[serde(default = "default_step")]
    pub step_s: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_horizon() -> f64 {
    3600.0
}

fn default_step() -> f64 {
    1.0
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            horizon_s: default_horizon(),
            step_s: default_step(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    #[default]
    LongRange,
    MidRange,
}

/// `sensors` section. Explicit ranges override the profile's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsSection {
    #[serde(default)]
    pub profile: ProfileName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego: Option<RangePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacent: Option<RangePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opposite: Option<RangePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<BTreeSet<LaneRelation>>,
    #[serde(default)]
    pub cross_edge: bool,
}

impl Default for SensorsSection {
    fn default() -> Self {
        SensorsSection {
            profile: ProfileName::LongRange,
            ego: None,
            adjacent: None,
            opposite: None,
            enabled: None,
            cross_edge: false,
        }
    }
}

impl SensorsSection {
    pub fn to_config(&self) -> SensorConfig {
        let mut c = default_sensor_profile(match self.profile {
            ProfileName::LongRange => SensorProfile::LongRange,
            ProfileName::MidRange => SensorProfile::MidRange,
        });
        if let Some(r) = self.ego {
            c.ego = r;
        }
        if let Some(r) = self.adjacent {
            c.adjacent = r;
        }
        if let Some(r) = self.opposite {
            c.opposite = r;
        }
        if let Some(e) = &self.enabled {
            c.enabled = e.clone();
        }
        c.cross_edge = self.cross_edge;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterInput {
    #[default]
    GroundTruth,
    /// Lane means of the combined estimates.
    Estimates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringSection {
    /// Cluster count used for the mapping; the knee of the elbow curve when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub include_q: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub input: ClusterInput,
}

fn default_k_max() -> usize {
    8
}

fn default_max_iter() -> usize {
    300
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for ClusteringSection {
    fn default() -> Self {
        ClusteringSection {
            k: None,
            k_max: default_k_max(),
            include_q: false,
            seed: 0,
            max_iter: default_max_iter(),
            tol: default_tol(),
            input: ClusterInput::GroundTruth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Estimate source compared against ground truth.
    #[serde(default = "default_source", with = "source_label")]
    pub source: Source,
    /// Also write one error record per observer lane stay.
    #[serde(default)]
    pub lane_stays: bool,
}

fn default_source() -> Source {
    Source::Combined
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            source: default_source(),
            lane_stays: false,
        }
    }
}

mod source_label {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::estimation::Source;

    pub fn serialize<S: Serializer>(s: &Source, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(s.label())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Source, D::Error> {
        let label = String::deserialize(de)?;
        match Source::from_label(&label) {
            Some(Source::GroundTruth) | None => Err(D::Error::custom(format!(
                "unknown estimate source `{label}`, expected mo_estimate, po_estimate or combined"
            ))),
            Some(s) => Ok(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_sweep")]
    pub penetration_pct: Vec<f64>,
}

fn default_sweep() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            penetration_pct: default_sweep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    /// External trajectory file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_file: Option<PathBuf>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub lenient: bool,
}

fn default_delimiter() -> char {
    ','
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            trajectory_file: None,
            delimiter: default_delimiter(),
            lenient: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory, relative to the scenario file.
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Count lanes that held no vehicle as zero-density lanes in ground-truth
    /// cluster and network means.
    #[serde(default)]
    pub include_unobserved_lanes: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out(),
            include_unobserved_lanes: false,
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| ScenarioError::from_toml(&e, text))?;
        config.validate()?;
        Ok(config)
    }

    /// Parses a scenario file and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::validation(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.output.dir.is_relative() {
            config.output.dir = base.join(&config.output.dir);
        }
        if let Some(f) = &config.ingest.trajectory_file {
            if f.is_relative() {
                config.ingest.trajectory_file = Some(base.join(f));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let sim = &self.simulation;
        if !(sim.step_s > 0.0 && sim.step_s.is_finite()) {
            return Err(ScenarioError::validation(format!(
                "simulation.step_s > 0 violated: {}",
                sim.step_s
            )));
        }
        if !(sim.horizon_s > 0.0 && sim.horizon_s.is_finite()) {
            return Err(ScenarioError::validation(format!(
                "simulation.horizon_s > 0 violated: {}",
                sim.horizon_s
            )));
        }
        self.aggregation
            .check_step(sim.step_s)
            .map_err(|e| ScenarioError::validation(e.to_string()))?;
        self.observers
            .validate()
            .map_err(|e| ScenarioError::validation(e.to_string()))?;
        self.sensors
            .to_config()
            .validate()
            .map_err(|e| ScenarioError::validation(e.to_string()))?;
        for &p in &self.sweep.penetration_pct {
            if !(p > 0.0 && p <= 100.0) {
                return Err(ScenarioError::validation(format!(
                    "sweep.penetration_pct entries must lie in (0, 100], got {p}"
                )));
            }
        }
        let c = &self.clustering;
        if c.k_max == 0 || c.k == Some(0) {
            return Err(ScenarioError::validation("clustering needs at least one cluster"));
        }
        Ok(())
    }

    pub fn build_network(&self) -> Result<RoadNetwork, ScenarioError> {
        RoadNetwork::from_spec(&self.network)
    }

    /// Overrides both the simulation and the observer seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.simulation.seed = seed;
        self.observers.seed = seed;
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
