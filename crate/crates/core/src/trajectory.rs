//! Per-step vehicle states and their delimited-text serialization.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::network::{LaneId, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u64);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Kinematic snapshot of one vehicle. `position_m` is the front bumper,
/// measured from the lane start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub vehicle: VehicleId,
    pub lane: LaneId,
    pub position_m: f64,
    pub speed_mps: f64,
    pub length_m: f64,
}

impl VehicleState {
    pub fn rear_m(&self) -> f64 {
        self.position_m - self.length_m
    }
}

/// A vehicle appearing on a lane: first appearance after the log start,
/// a lane change, or a wrap onto the same lane (position decrease).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryEvent {
    pub vehicle: VehicleId,
    pub lane: LaneId,
    pub frame: usize,
}

/// Frame `i` holds the vehicles at time `start_s + i * step_s`, sorted by
/// vehicle id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub start_s: f64,
    pub step_s: f64,
    pub frames: Vec<Vec<VehicleState>>,
    pub entries: Vec<EntryEvent>,
}

pub const TRAJECTORY_HEADER: [&str; 6] = [
    "timestep_s",
    "vehicle_id",
    "edge_id",
    "lane_index",
    "position_m",
    "speed_mps",
];

impl TrajectoryLog {
    /// Builds a log from frames, sorting each frame and deriving entry events.
    pub fn new(start_s: f64, step_s: f64, mut frames: Vec<Vec<VehicleState>>) -> Self {
        for frame in &mut frames {
            frame.sort_by_key(|v| v.vehicle);
        }
        let entries = derive_entries(&frames);
        TrajectoryLog {
            start_s,
            step_s,
            frames,
            entries,
        }
    }

    pub fn time_of(&self, frame: usize) -> f64 {
        self.start_s + frame as f64 * self.step_s
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn vehicle_steps(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Delimited text with a leading `#` metadata line carrying the frame
    /// grid, so empty frames at either end survive a round trip.
    pub fn to_csv(&self, network: &RoadNetwork, delimiter: char) -> String {
        let d = delimiter;
        let mut out = String::new();
        writeln!(
            out,
            "# step_s={} start_s={} frames={}",
            self.step_s,
            self.start_s,
            self.frames.len()
        )
        .unwrap();
        writeln!(out, "{}", TRAJECTORY_HEADER.join(&d.to_string())).unwrap();
        for (i, frame) in self.frames.iter().enumerate() {
            let t = self.time_of(i);
            for v in frame {
                let lane = network.lane(v.lane);
                writeln!(
                    out,
                    "{t}{d}{}{d}{}{d}{}{d}{}{d}{}",
                    v.vehicle, lane.edge, lane.index, v.position_m, v.speed_mps
                )
                .unwrap();
            }
        }
        out
    }
}

pub fn derive_entries(frames: &[Vec<VehicleState>]) -> Vec<EntryEvent> {
    let mut entries = Vec::new();
    let mut previous: HashMap<VehicleId, (LaneId, f64)> = HashMap::new();
    for (i, frame) in frames.iter().enumerate() {
        let mut current = HashMap::with_capacity(frame.len());
        for v in frame {
            let entered = match previous.get(&v.vehicle) {
                None => i > 0,
                Some(&(lane, pos)) => lane != v.lane || v.position_m < pos,
            };
            if entered {
                entries.push(EntryEvent {
                    vehicle: v.vehicle,
                    lane: v.lane,
                    frame: i,
                });
            }
            current.insert(v.vehicle, (v.lane, v.position_m));
        }
        previous = current;
    }
    entries
}
