//! Pipeline stages over an output directory.
//!
//! Each stage reads only the files written by earlier stages, so stages can
//! run in separate processes. Every stage refreshes `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clustering::{
    elbow_curve, kmeans, knee, lane_features, lane_features_from_estimates, FeatureSelection, KMeansOptions,
};
use crate::error::{ClusterError, EstimationError, PolicyError, ScenarioError, SimulationError, TrajectoryError};
use crate::estimation::{
    estimate_log, ground_truth_states, scope_rollup, ClusterId, EstimateLogError, RollupTarget, Scope, Source,
    TrafficState,
};
use crate::files::{self, RowError};
use crate::ground_truth::{ground_truth, GroundTruthState};
use crate::ingest::{parse_trajectory_with, IngestMode, IngestOptions};
use crate::metrics::{compare, error_histogram, lane_stay_records, mfd_series, summarize, ErrorRecord, ScopeFilter};
use crate::network::{LaneId, RoadNetwork};
use crate::observers::ObserverPolicy;
use crate::scenario::{hex, ClusterInput, ScenarioConfig};
use crate::sim::simulate;
use crate::trajectory::TrajectoryLog;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const LANE_STAYS_FILE: &str = "lane_stays.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const ELBOW_FILE: &str = "elbow.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const LANE_STAY_ERRORS_FILE: &str = "lane_stay_errors.csv";
pub const SUMMARY_FILE: &str = "error_summary.txt";
pub const HISTOGRAM_FILE: &str = "error_histogram.csv";
pub const MFD_FILE: &str = "mfd.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Ingest,
    Estimate,
    Cluster,
    Compare,
    Mfd,
    Sweep,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ingest => "ingest",
            Stage::Estimate => "estimate",
            Stage::Cluster => "cluster",
            Stage::Compare => "compare",
            Stage::Mfd => "mfd",
            Stage::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("trajectory input: {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Estimate(#[from] EstimateLogError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("{file} not found in {dir}; run `{stage}` first")]
    MissingArtifact {
        file: &'static str,
        dir: PathBuf,
        stage: &'static str,
    },
    #[error("{file}, row {row}: {message}")]
    Artifact {
        file: &'static str,
        row: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 1 for invalid input, 2 for a missing prior stage, 3 for I/O trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingArtifact { .. } => 2,
            PipelineError::Io { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub artifacts: Vec<&'static str>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub simulation_seed: u64,
    pub observer_seed: u64,
    pub stages: BTreeMap<String, Vec<String>>,
    /// File name to content SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// Row of the penetration sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub penetration_pct: f64,
    pub scope_kind: &'static str,
    pub summary: crate::metrics::QuantitySummary,
}

pub struct Pipeline {
    config: ScenarioConfig,
    network: RoadNetwork,
    out: PathBuf,
    workers: usize,
}

impl Pipeline {
    /// `out` overrides the scenario's output directory.
    pub fn new(config: ScenarioConfig, out: Option<PathBuf>, workers: usize) -> Result<Self, PipelineError> {
        config.validate()?;
        let network = config.build_network()?;
        let out = out.unwrap_or_else(|| config.output.dir.clone());
        Ok(Pipeline {
            config,
            network,
            out,
            workers: workers.max(1),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.network
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn write(&self, file: &'static str, content: &str) -> Result<(), PipelineError> {
        fs::create_dir_all(&self.out).map_err(|source| PipelineError::Io {
            path: self.out.clone(),
            source,
        })?;
        let path = self.path(file);
        fs::write(&path, content).map_err(|source| PipelineError::Io { path, source })
    }

    fn read(&self, file: &'static str, stage: &'static str) -> Result<String, PipelineError> {
        let path = self.path(file);
        if !path.is_file() {
            return Err(PipelineError::MissingArtifact {
                file,
                dir: self.out.clone(),
                stage,
            });
        }
        fs::read_to_string(&path).map_err(|source| PipelineError::Io { path, source })
    }

    fn read_optional(&self, file: &'static str) -> Result<Option<String>, PipelineError> {
        if self.path(file).is_file() {
            self.read(file, "").map(Some)
        } else {
            Ok(None)
        }
    }

    fn artifact_error(file: &'static str) -> impl Fn(RowError) -> PipelineError {
        move |e| PipelineError::Artifact {
            file,
            row: e.row,
            message: e.message,
        }
    }

    fn load_trajectory(&self) -> Result<TrajectoryLog, PipelineError> {
        let text = self.read(TRAJECTORY_FILE, "simulate` or `ingest")?;
        Ok(parse_trajectory_with(&text, &self.network, &IngestOptions::default())?.log)
    }

    fn load_ground_truth(&self) -> Result<Vec<GroundTruthState>, PipelineError> {
        let text = self.read(GROUND_TRUTH_FILE, "simulate` or `ingest")?;
        files::read_ground_truth(&text, &self.network).map_err(Self::artifact_error(GROUND_TRUTH_FILE))
    }

    fn load_estimates(&self) -> Result<Vec<TrafficState>, PipelineError> {
        let text = self.read(ESTIMATES_FILE, "estimate")?;
        files::read_estimates(&text, &self.network).map_err(Self::artifact_error(ESTIMATES_FILE))
    }

    fn load_clusters(&self) -> Result<Option<BTreeMap<LaneId, ClusterId>>, PipelineError> {
        match self.read_optional(CLUSTERS_FILE)? {
            Some(text) => files::read_clusters(&text, &self.network)
                .map(Some)
                .map_err(Self::artifact_error(CLUSTERS_FILE)),
            None => Ok(None),
        }
    }

    fn finish(&self, stage: Stage, artifacts: Vec<&'static str>, notes: Vec<String>) -> Result<StageReport, PipelineError> {
        self.update_manifest(stage, &artifacts)?;
        Ok(StageReport {
            stage,
            artifacts,
            notes,
        })
    }

    /// Config hash with the machine-specific paths stripped, so identical
    /// runs in different directories agree.
    pub fn config_hash(&self) -> String {
        let mut c = self.config.clone();
        c.output.dir = PathBuf::new();
        c.ingest.trajectory_file = c
            .ingest
            .trajectory_file
            .as_ref()
            .and_then(|p| p.file_name().map(PathBuf::from));
        c.hash()
    }

    fn update_manifest(&self, stage: Stage, artifacts: &[&'static str]) -> Result<(), PipelineError> {
        let hash = self.config_hash();
        let fresh = Manifest {
            config_sha256: hash.clone(),
            simulation_seed: self.config.simulation.seed,
            observer_seed: self.config.observers.seed,
            stages: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        };
        let mut manifest = match self.read_optional(MANIFEST_FILE)? {
            Some(text) => match serde_json::from_str::<Manifest>(&text) {
                Ok(m) if m.config_sha256 == hash => m,
                _ => fresh,
            },
            None => fresh,
        };
        manifest.stages.insert(
            stage.name().to_string(),
            artifacts.iter().map(|a| a.to_string()).collect(),
        );
        for &file in artifacts {
            let path = self.path(file);
            let bytes = fs::read(&path).map_err(|source| PipelineError::Io { path, source })?;
            manifest.artifacts.insert(file.to_string(), hex(&Sha256::digest(&bytes)));
        }
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        self.write(MANIFEST_FILE, &text)
    }

    fn write_log_and_truth(&self, log: &TrajectoryLog) -> Result<usize, PipelineError> {
        let gt = ground_truth(log, &self.network, &self.config.aggregation)?;
        self.write(TRAJECTORY_FILE, &log.to_csv(&self.network, ','))?;
        self.write(GROUND_TRUTH_FILE, &files::write_ground_truth(&gt, &self.network))?;
        Ok(gt.len())
    }

    pub fn simulate(&self) -> Result<StageReport, PipelineError> {
        let sim = &self.config.simulation;
        let run = simulate(&self.network, &self.config.demand, sim.horizon_s, sim.step_s, sim.seed)?;
        let n_states = self.write_log_and_truth(&run.log)?;
        let notes = vec![
            format!(
                "{} frames, {} vehicles inserted, {} exited, {} still queued",
                run.log.len(),
                run.report.inserted,
                run.report.exited,
                run.report.queued_at_end
            ),
            format!("{n_states} ground-truth lane states"),
        ];
        self.finish(Stage::Simulate, vec![TRAJECTORY_FILE, GROUND_TRUTH_FILE], notes)
    }

    /// Validates an external trajectory file and stores it in canonical
    /// form together with its ground truth.
    pub fn ingest(&self, input: Option<&Path>) -> Result<StageReport, PipelineError> {
        let path = input
            .map(Path::to_path_buf)
            .or_else(|| self.config.ingest.trajectory_file.clone())
            .ok_or_else(|| ScenarioError::validation("no trajectory file given (ingest.trajectory_file)"))?;
        let text = fs::read_to_string(&path)
            .map_err(|e| ScenarioError::validation(format!("cannot read {}: {e}", path.display())))?;
        let delimiter = u8::try_from(self.config.ingest.delimiter)
            .map_err(|_| ScenarioError::validation("ingest.delimiter must be a single-byte character"))?;
        let opts = IngestOptions {
            delimiter,
            mode: if self.config.ingest.lenient {
                IngestMode::Lenient
            } else {
                IngestMode::Strict
            },
            ..IngestOptions::default()
        };
        let report = parse_trajectory_with(&text, &self.network, &opts)?;
        self.config
            .aggregation
            .check_step(report.log.step_s)
            .map_err(PipelineError::Policy)?;
        let n_states = self.write_log_and_truth(&report.log)?;
        let mut notes = vec![format!(
            "{} rows read, {} frames, {n_states} ground-truth lane states",
            report.rows_read,
            report.log.len()
        )];
        for (reason, n) in &report.dropped {
            notes.push(format!("dropped {n} rows: {reason}"));
        }
        self.finish(Stage::Ingest, vec![TRAJECTORY_FILE, GROUND_TRUTH_FILE], notes)
    }

    fn estimate_with(&self, log: &TrajectoryLog, policy: &ObserverPolicy) -> Result<crate::estimation::EstimationRun, PipelineError> {
        Ok(estimate_log(
            log,
            &self.network,
            &self.config.aggregation,
            policy,
            &self.config.sensors.to_config(),
            self.workers,
        )?)
    }

    /// Lane estimates followed by their network rollup.
    fn with_network_rollup(lane_states: Vec<TrafficState>) -> Result<Vec<TrafficState>, PipelineError> {
        let network = scope_rollup(&lane_states, &BTreeMap::new(), RollupTarget::Network)?;
        let mut all = lane_states;
        all.extend(network);
        Ok(all)
    }

    pub fn estimate(&self) -> Result<StageReport, PipelineError> {
        let log = self.load_trajectory()?;
        let run = self.estimate_with(&log, &self.config.observers)?;
        let n_lane = run.states.len();
        let states = Self::with_network_rollup(run.states)?;
        self.write(ESTIMATES_FILE, &files::write_estimates(&states, &self.network))?;
        let mut artifacts = vec![ESTIMATES_FILE];
        if self.config.compare.lane_stays {
            self.write(LANE_STAYS_FILE, &files::write_lane_stays(&run.lane_stays, &self.network))?;
            artifacts.push(LANE_STAYS_FILE);
        }
        let observers: usize = run.assignments.iter().map(|a| a.mo_ids.len() + a.po_anchors.len()).sum();
        let notes = vec![format!(
            "{} intervals, {observers} observer draws, {} observations, {n_lane} lane estimates",
            run.assignments.len(),
            run.observations
        )];
        self.finish(Stage::Estimate, artifacts, notes)
    }

    pub fn cluster(&self) -> Result<StageReport, PipelineError> {
        let c = &self.config.clustering;
        let features = match c.input {
            ClusterInput::GroundTruth => lane_features(&self.load_ground_truth()?)?,
            ClusterInput::Estimates => {
                let combined: Vec<TrafficState> = self
                    .load_estimates()?
                    .into_iter()
                    .filter(|s| s.source == Source::Combined)
                    .collect();
                lane_features_from_estimates(&combined)?
            }
        };
        let opts = KMeansOptions {
            seed: c.seed,
            max_iter: c.max_iter,
            tol: c.tol,
            features: FeatureSelection { include_q: c.include_q },
        };
        let k_max = c.k_max.min(features.len());
        let elbow = elbow_curve(&features, 1..=k_max, &opts)?;
        let k = match c.k {
            Some(k) => k,
            None => knee(&elbow).unwrap_or(k_max),
        };
        let model = kmeans(&features, k, &opts)?;
        self.write(CLUSTERS_FILE, &files::write_clusters(&model.assignment, &self.network))?;
        self.write(ELBOW_FILE, &files::write_elbow(&elbow))?;
        let notes = vec![format!(
            "{} lanes in {k} clusters, wcss {:.4}, knee {}",
            features.len(),
            model.wcss,
            knee(&elbow).map_or("none".to_string(), |k| k.to_string())
        )];
        self.finish(Stage::Cluster, vec![CLUSTERS_FILE, ELBOW_FILE], notes)
    }

    /// Ground-truth lane states plus cluster and network rollups.
    fn truth_states(
        &self,
        gt: &[GroundTruthState],
        clusters: Option<&BTreeMap<LaneId, ClusterId>>,
    ) -> Result<Vec<TrafficState>, PipelineError> {
        let lanes = ground_truth_states(gt);
        let for_rollup: Vec<TrafficState> = if self.config.output.include_unobserved_lanes {
            gt.iter()
                .map(|s| {
                    let mut t = s.to_traffic_state();
                    if t.q_vph.is_none() {
                        t.q_vph = Some(0.0);
                    }
                    t
                })
                .collect()
        } else {
            lanes.clone()
        };
        let mut all = lanes;
        if let Some(mapping) = clusters {
            all.extend(scope_rollup(&for_rollup, mapping, RollupTarget::Cluster)?);
        }
        all.extend(scope_rollup(&for_rollup, &BTreeMap::new(), RollupTarget::Network)?);
        Ok(all)
    }

    fn estimate_cluster_rollup(
        estimates: &[TrafficState],
        clusters: Option<&BTreeMap<LaneId, ClusterId>>,
    ) -> Result<Vec<TrafficState>, PipelineError> {
        let mut all = estimates.to_vec();
        if let Some(mapping) = clusters {
            let lanes: Vec<TrafficState> =
                estimates.iter().filter(|s| matches!(s.scope, Scope::Lane(_))).copied().collect();
            all.extend(scope_rollup(&lanes, mapping, RollupTarget::Cluster)?);
        }
        Ok(all)
    }

    pub fn compare(&self) -> Result<StageReport, PipelineError> {
        let gt = self.load_ground_truth()?;
        let estimates = self.load_estimates()?;
        let clusters = self.load_clusters()?;
        let truth = self.truth_states(&gt, clusters.as_ref())?;
        let source = self.config.compare.source;
        let est: Vec<TrafficState> = Self::estimate_cluster_rollup(&estimates, clusters.as_ref())?
            .into_iter()
            .filter(|s| s.source == source)
            .collect();
        let report = compare(&truth, &est);
        self.write(ERRORS_FILE, &files::write_errors(&report.records, &self.network))?;
        let by_kind = files::group_by_scope_kind(&report.records, |r| r.scope);
        let summaries: Vec<(&str, Vec<_>)> = by_kind
            .iter()
            .map(|(kind, recs)| (*kind, summarize(&recs.iter().map(|r| **r).collect::<Vec<ErrorRecord>>())))
            .collect();
        self.write(SUMMARY_FILE, &files::write_summary(source, report.joined, &summaries))?;
        let histograms: Vec<(&str, Vec<_>)> = by_kind
            .iter()
            .map(|(kind, recs)| (*kind, error_histogram(&recs.iter().map(|r| **r).collect::<Vec<_>>())))
            .collect();
        self.write(HISTOGRAM_FILE, &files::write_histogram(&histograms))?;
        let mut artifacts = vec![ERRORS_FILE, SUMMARY_FILE, HISTOGRAM_FILE];
        if self.config.compare.lane_stays {
            let text = self.read(LANE_STAYS_FILE, "estimate")?;
            let stays = files::read_lane_stays(&text, &self.network).map_err(Self::artifact_error(LANE_STAYS_FILE))?;
            let records = lane_stay_records(&stays, &gt);
            self.write(LANE_STAY_ERRORS_FILE, &files::write_errors(&records, &self.network))?;
            artifacts.push(LANE_STAY_ERRORS_FILE);
        }
        let mut notes = vec![format!(
            "{} joined (scope, interval) pairs for {source}, {} records",
            report.joined,
            report.records.len()
        )];
        for (kind, s) in &summaries {
            for q in s {
                notes.push(format!(
                    "{kind} {}: median rel. error {:.3}, overestimated {:.2}",
                    q.quantity.label(),
                    q.median,
                    q.overestimated_fraction
                ));
            }
        }
        self.finish(Stage::Compare, artifacts, notes)
    }

    pub fn mfd(&self) -> Result<StageReport, PipelineError> {
        let gt = self.load_ground_truth()?;
        let estimates = self.load_estimates()?;
        let clusters = self.load_clusters()?;
        let mut states = self.truth_states(&gt, clusters.as_ref())?;
        states.extend(Self::estimate_cluster_rollup(&estimates, clusters.as_ref())?);
        let mut points = mfd_series(&states, ScopeFilter::Clusters);
        points.extend(mfd_series(&states, ScopeFilter::Network));
        self.write(MFD_FILE, &files::write_mfd(&points, &self.network))?;
        let notes = vec![format!("{} MFD points", points.len())];
        self.finish(Stage::Mfd, vec![MFD_FILE], notes)
    }

    /// Estimate and compare at each configured penetration rate.
    pub fn sweep_rows(&self) -> Result<Vec<SweepRow>, PipelineError> {
        let log = self.load_trajectory()?;
        let gt = self.load_ground_truth()?;
        let truth = self.truth_states(&gt, None)?;
        let mut rows = Vec::new();
        for &p in &self.config.sweep.penetration_pct {
            let policy = ObserverPolicy {
                penetration_pct: p,
                ..self.config.observers
            };
            let run = self.estimate_with(&log, &policy)?;
            let est: Vec<TrafficState> = Self::with_network_rollup(run.states)?
                .into_iter()
                .filter(|s| s.source == self.config.compare.source)
                .collect();
            let report = compare(&truth, &est);
            for (kind, recs) in files::group_by_scope_kind(&report.records, |r| r.scope) {
                let recs: Vec<ErrorRecord> = recs.into_iter().copied().collect();
                for summary in summarize(&recs) {
                    rows.push(SweepRow {
                        penetration_pct: p,
                        scope_kind: kind,
                        summary,
                    });
                }
            }
        }
        Ok(rows)
    }

    pub fn sweep(&self) -> Result<StageReport, PipelineError> {
        let rows = self.sweep_rows()?;
        let mut text = String::from(
            "penetration_pct,scope_kind,quantity,count,mean,median,p90,overestimated_fraction,mean_signed_error\n",
        );
        for r in &rows {
            let s = &r.summary;
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.penetration_pct,
                r.scope_kind,
                s.quantity.label(),
                s.count,
                s.mean,
                s.median,
                s.p90,
                s.overestimated_fraction,
                s.mean_signed_error
            ));
        }
        self.write(SWEEP_FILE, &text)?;
        let notes = vec![format!(
            "{} penetration rates, {} summary rows",
            self.config.sweep.penetration_pct.len(),
            rows.len()
        )];
        self.finish(Stage::Sweep, vec![SWEEP_FILE], notes)
    }

    /// simulate, estimate, cluster, compare and mfd in order.
    pub fn run_all(&self) -> Result<Vec<StageReport>, PipelineError> {
        Ok(vec![
            self.simulate()?,
            self.estimate()?,
            self.cluster()?,
            self.compare()?,
            self.mfd()?,
        ])
    }
}
