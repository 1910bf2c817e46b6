//! Surrounding-vehicle detection by an observer.
//!
//! Detection runs in two stages. Lane-based filtering keeps vehicles on an
//! enabled lane relation (the ego lane, the other lanes of the ego edge,
//! the lanes of the opposite edge). Distance-based filtering then keeps a
//! vehicle iff its longitudinal offset `d` from the observer satisfies
//! `-backward <= d <= forward` for that relation. There is no occlusion
//! and no measurement noise.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::DetectionError;
use crate::network::{LaneId, RoadNetwork};
use crate::trajectory::{VehicleId, VehicleState};

/// Physical upper bound on any detection range, in meters.
pub const MAX_RANGE_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneRelation {
    Ego,
    Adjacent,
    Opposite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangePair {
    pub forward_m: f64,
    pub backward_m: f64,
}

impl RangePair {
    pub fn new(forward_m: f64, backward_m: f64) -> Self {
        RangePair {
            forward_m,
            backward_m,
        }
    }

    pub fn span(&self) -> f64 {
        self.forward_m + self.backward_m
    }

    pub fn contains(&self, offset_m: f64) -> bool {
        offset_m >= -self.backward_m && offset_m <= self.forward_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub ego: RangePair,
    pub adjacent: RangePair,
    pub opposite: RangePair,
    /// Lateral half-widths; lanes are discrete, so these act only through
    /// `enabled`.
    pub width_left_m: f64,
    pub width_right_m: f64,
    pub enabled: BTreeSet<LaneRelation>,
    /// Also detect vehicles on the edges directly downstream (within the
    /// forward range) and upstream (within the backward range) of the ego
    /// edge.
    pub cross_edge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorProfile {
    LongRange,
    MidRange,
}

/// Built-in sensor profiles. Long range: ego lane 200 m ahead / 100 m
/// behind, other relations 100 m / 50 m, widths 7 m left / 3.5 m right.
/// Mid range halves every value. Forward ranges are twice the backward
/// ones for every relation.
pub fn default_sensor_profile(kind: SensorProfile) -> SensorConfig {
    let scale = match kind {
        SensorProfile::LongRange => 1.0,
        SensorProfile::MidRange => 0.5,
    };
    SensorConfig {
        ego: RangePair::new(200.0 * scale, 100.0 * scale),
        adjacent: RangePair::new(100.0 * scale, 50.0 * scale),
        opposite: RangePair::new(100.0 * scale, 50.0 * scale),
        width_left_m: 7.0 * scale,
        width_right_m: 3.5 * scale,
        enabled: BTreeSet::from([LaneRelation::Ego, LaneRelation::Adjacent]),
        cross_edge: false,
    }
}

impl SensorConfig {
    /// Ego lane only, with the given ranges.
    pub fn ego_only(forward_m: f64, backward_m: f64) -> Self {
        SensorConfig {
            ego: RangePair::new(forward_m, backward_m),
            enabled: BTreeSet::from([LaneRelation::Ego]),
            ..default_sensor_profile(SensorProfile::LongRange)
        }
    }

    pub fn range(&self, relation: LaneRelation) -> RangePair {
        match relation {
            LaneRelation::Ego => self.ego,
            LaneRelation::Adjacent => self.adjacent,
            LaneRelation::Opposite => self.opposite,
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        for (name, r) in [("ego", self.ego), ("adjacent", self.adjacent), ("opposite", self.opposite)] {
            for value in [r.forward_m, r.backward_m] {
                if !(0.0..=MAX_RANGE_M).contains(&value) {
                    return Err(DetectionError::InvalidSensor(format!(
                        "{name} range {value} m outside [0, {MAX_RANGE_M}]"
                    )));
                }
            }
        }
        if self.width_left_m < 0.0 || self.width_right_m < 0.0 {
            return Err(DetectionError::InvalidSensor("negative lateral width".into()));
        }
        Ok(())
    }

    /// Enabled lanes around `ego_lane` with their relation.
    pub fn zone_lanes(&self, network: &RoadNetwork, ego_lane: LaneId) -> Vec<(LaneId, LaneRelation)> {
        let lane = network.lane(ego_lane);
        let mut out = Vec::new();
        if self.enabled.contains(&LaneRelation::Ego) {
            out.push((ego_lane, LaneRelation::Ego));
        }
        if self.enabled.contains(&LaneRelation::Adjacent) {
            let edge = network.edge(lane.edge).expect("lane edge exists");
            out.extend(
                edge.lanes
                    .iter()
                    .filter(|&&l| l != ego_lane)
                    .map(|&l| (l, LaneRelation::Adjacent)),
            );
        }
        if self.enabled.contains(&LaneRelation::Opposite) {
            if let Some(opp) = lane.opposite_edge.and_then(|e| network.edge(e)) {
                out.extend(opp.lanes.iter().map(|&l| (l, LaneRelation::Opposite)));
            }
        }
        out
    }

    /// Sum of `forward + backward` over the enabled lanes around `ego_lane`.
    pub fn zone_total_length(&self, network: &RoadNetwork, ego_lane: LaneId) -> f64 {
        self.zone_lanes(network, ego_lane)
            .iter()
            .map(|&(_, r)| self.range(r).span())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObserverKind {
    #[serde(rename = "MO")]
    Moving,
    #[serde(rename = "PO")]
    Parking,
}

impl ObserverKind {
    pub fn label(self) -> &'static str {
        match self {
            ObserverKind::Moving => "MO",
            ObserverKind::Parking => "PO",
        }
    }
}

/// Where an observer is at one step. A moving observer is a vehicle in the
/// snapshot (`vehicle` is set and excluded from its own detections). A
/// parking observer is a fixed virtual sensor with speed 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverPose {
    pub observer_id: VehicleId,
    pub kind: ObserverKind,
    pub lane: LaneId,
    pub position_m: f64,
    pub speed_mps: f64,
    pub vehicle: Option<VehicleId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub vehicle: VehicleId,
    pub lane: LaneId,
    pub relation: LaneRelation,
    /// Positive ahead of the observer along the ego edge's direction.
    pub distance_m: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub observer_id: VehicleId,
    pub kind: ObserverKind,
    pub time_s: f64,
    pub ego_lane: LaneId,
    pub ego_speed_mps: f64,
    pub detections: Vec<Detection>,
    pub zone_total_length_m: f64,
    /// Set when every enabled range is zero; detections are then empty.
    pub degenerate_zone: bool,
}

impl Observation {
    pub fn n_det(&self) -> usize {
        self.detections.len()
    }
}

/// Vehicles of one frame bucketed by lane.
#[derive(Debug, Clone)]
pub struct WorldSnapshot<'a> {
    pub time_s: f64,
    vehicles: &'a [VehicleState],
    by_lane: Vec<Vec<usize>>,
}

impl<'a> WorldSnapshot<'a> {
    pub fn new(time_s: f64, vehicles: &'a [VehicleState], network: &RoadNetwork) -> Self {
        let mut by_lane = vec![Vec::new(); network.lanes().len()];
        for (i, v) in vehicles.iter().enumerate() {
            if let Some(list) = by_lane.get_mut(v.lane.0 as usize) {
                list.push(i);
            }
        }
        WorldSnapshot {
            time_s,
            vehicles,
            by_lane,
        }
    }

    pub fn on_lane(&self, lane: LaneId) -> impl Iterator<Item = &'a VehicleState> + '_ {
        self.by_lane
            .get(lane.0 as usize)
            .into_iter()
            .flatten()
            .map(move |&i| &self.vehicles[i])
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&'a VehicleState> {
        self.vehicles
            .binary_search_by_key(&id, |v| v.vehicle)
            .ok()
            .map(|i| &self.vehicles[i])
            .or_else(|| self.vehicles.iter().find(|v| v.vehicle == id))
    }
}

pub fn detect(
    ego: &ObserverPose,
    world: &WorldSnapshot<'_>,
    sensors: &SensorConfig,
    network: &RoadNetwork,
) -> Result<Observation, DetectionError> {
    if let Some(id) = ego.vehicle {
        match world.vehicle(id) {
            Some(v) if v.lane == ego.lane => {}
            _ => return Err(DetectionError::EgoNotFound(id.0)),
        }
    }
    let zone_lanes = sensors.zone_lanes(network, ego.lane);
    let zone_total_length_m: f64 = zone_lanes.iter().map(|&(_, r)| sensors.range(r).span()).sum();
    let mut obs = Observation {
        observer_id: ego.observer_id,
        kind: ego.kind,
        time_s: world.time_s,
        ego_lane: ego.lane,
        ego_speed_mps: match ego.kind {
            ObserverKind::Moving => ego.speed_mps,
            ObserverKind::Parking => 0.0,
        },
        detections: Vec::new(),
        zone_total_length_m,
        degenerate_zone: !(zone_total_length_m > 0.0),
    };
    if obs.degenerate_zone {
        return Ok(obs);
    }

    let ego_lane = network.lane(ego.lane);
    let mut seen: HashSet<VehicleId> = HashSet::new();
    let mut consider = |v: &VehicleState, relation: LaneRelation, offset: f64, obs: &mut Observation| {
        if Some(v.vehicle) == ego.vehicle || !sensors.range(relation).contains(offset) {
            return;
        }
        if seen.insert(v.vehicle) {
            obs.detections.push(Detection {
                vehicle: v.vehicle,
                lane: v.lane,
                relation,
                distance_m: offset,
                speed_mps: v.speed_mps,
            });
        }
    };

    for &(lane_id, relation) in &zone_lanes {
        let lane = network.lane(lane_id);
        for v in world.on_lane(lane_id) {
            let offset = match relation {
                LaneRelation::Opposite => (lane.length_m - v.position_m) - ego.position_m,
                _ => v.position_m - ego.position_m,
            };
            consider(v, relation, offset, &mut obs);
        }
    }

    if sensors.cross_edge {
        let relation_of = |index: usize| {
            if index == ego_lane.index {
                LaneRelation::Ego
            } else {
                LaneRelation::Adjacent
            }
        };
        let remaining = ego_lane.length_m - ego.position_m;
        for &next in network.downstream(ego_lane.edge) {
            for &lane_id in &network.edge(next).expect("adjacent edge").lanes {
                let relation = relation_of(network.lane(lane_id).index);
                if !sensors.enabled.contains(&relation) {
                    continue;
                }
                for v in world.on_lane(lane_id) {
                    consider(v, relation, remaining + v.position_m, &mut obs);
                }
            }
        }
        for &prev in network.upstream(ego_lane.edge) {
            for &lane_id in &network.edge(prev).expect("adjacent edge").lanes {
                let lane = network.lane(lane_id);
                let relation = relation_of(lane.index);
                if !sensors.enabled.contains(&relation) {
                    continue;
                }
                for v in world.on_lane(lane_id) {
                    consider(v, relation, -(ego.position_m + lane.length_m - v.position_m), &mut obs);
                }
            }
        }
    }

    obs.detections.sort_by_key(|d| d.vehicle);
    Ok(obs)
}
