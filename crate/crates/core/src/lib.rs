//! Vehicles as traffic sensors: a microscopic simulator, observer-based
//! density/speed/flow estimation, lane clustering and MFD comparison.

pub mod aggregation;
pub mod clustering;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod files;
pub mod ground_truth;
pub mod ingest;
pub mod metrics;
pub mod network;
pub mod observers;
pub mod pipeline;
pub mod scenario;
pub mod sim;
pub mod trajectory;

pub use aggregation::AggregationConfig;
pub use network::{builtin_network, load_network, Builtin, EdgeId, LaneId, NodeId, RoadNetwork};
pub use trajectory::{TrajectoryLog, VehicleId, VehicleState};
pub use pipeline::{Pipeline, PipelineError, Stage};
pub use scenario::ScenarioConfig;
