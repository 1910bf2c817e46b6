//! Observer-based traffic state estimates.
//!
//! A moving observer counts itself as part of the traffic it measures:
//! `k* = (1 + n_det) * 1000 / L`, `v* = (sum v_k + v_ego) / (n_det + 1)`,
//! `q* = k* v*`, where `L` is the total zone length over the enabled lanes.
//! A parking observer does not: `k** = n_det * 1000 / L`,
//! `v** = sum v_k / n_det` (absent when nothing was detected).
//!
//! Per-step values are averaged first per observer over its own valid
//! steps, then across observers with equal weight.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationConfig, Interval};
use crate::detection::{detect, ObserverKind, ObserverPose, Observation, SensorConfig, WorldSnapshot};
use crate::error::{DetectionError, EstimationError, PolicyError};
use crate::ground_truth::GroundTruthState;
use crate::network::{LaneId, RoadNetwork};
use crate::observers::{sample_observers, ObserverAssignment, ObserverPolicy};
use crate::trajectory::{TrajectoryLog, VehicleId};

const MPS_TO_KMH: f64 = 3.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    /// veh/km
    pub k_vpk: f64,
    /// km/h
    pub v_kmh: Option<f64>,
    /// veh/h
    pub q_vph: Option<f64>,
}

pub fn mo_point_estimate(obs: &Observation) -> Result<PointEstimate, EstimationError> {
    if obs.kind != ObserverKind::Moving {
        return Err(EstimationError::WrongObserverKind {
            expected: "MO",
            actual: obs.kind.label(),
        });
    }
    if !(obs.zone_total_length_m > 0.0) {
        return Err(EstimationError::EmptyZone);
    }
    let n = obs.n_det() as f64;
    let k = (1.0 + n) * 1000.0 / obs.zone_total_length_m;
    let speed_sum: f64 = obs.detections.iter().map(|d| d.speed_mps).sum();
    let v = (speed_sum + obs.ego_speed_mps) / (n + 1.0) * MPS_TO_KMH;
    Ok(PointEstimate {
        k_vpk: k,
        v_kmh: Some(v),
        q_vph: Some(k * v),
    })
}

pub fn po_point_estimate(obs: &Observation) -> Result<PointEstimate, EstimationError> {
    if obs.kind != ObserverKind::Parking {
        return Err(EstimationError::WrongObserverKind {
            expected: "PO",
            actual: obs.kind.label(),
        });
    }
    if !(obs.zone_total_length_m > 0.0) {
        return Err(EstimationError::EmptyZone);
    }
    let n = obs.n_det();
    let k = n as f64 * 1000.0 / obs.zone_total_length_m;
    let v = (n > 0).then(|| {
        obs.detections.iter().map(|d| d.speed_mps).sum::<f64>() / n as f64 * MPS_TO_KMH
    });
    Ok(PointEstimate {
        k_vpk: k,
        v_kmh: v,
        q_vph: v.map(|v| k * v),
    })
}

pub fn point_estimate(obs: &Observation) -> Result<PointEstimate, EstimationError> {
    match obs.kind {
        ObserverKind::Moving => mo_point_estimate(obs),
        ObserverKind::Parking => po_point_estimate(obs),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Lane(LaneId),
    Cluster(ClusterId),
    Network,
}

impl Scope {
    pub fn kind(&self) -> &'static str {
        match self {
            Scope::Lane(_) => "lane",
            Scope::Cluster(_) => "cluster",
            Scope::Network => "network",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    GroundTruth,
    MoEstimate,
    PoEstimate,
    Combined,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::GroundTruth,
        Source::MoEstimate,
        Source::PoEstimate,
        Source::Combined,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Source::GroundTruth => "ground_truth",
            Source::MoEstimate => "mo_estimate",
            Source::PoEstimate => "po_estimate",
            Source::Combined => "combined",
        }
    }

    pub fn from_label(label: &str) -> Option<Source> {
        Source::ALL.into_iter().find(|s| s.label() == label)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Density, speed and flow for one scope and interval. `q` is absent
/// whenever `v` is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficState {
    pub scope: Scope,
    pub interval_start_s: f64,
    pub k_vpk: f64,
    pub v_kmh: Option<f64>,
    pub q_vph: Option<f64>,
    pub source: Source,
    pub sample_count: usize,
}

impl GroundTruthState {
    pub fn to_traffic_state(&self) -> TrafficState {
        TrafficState {
            scope: Scope::Lane(self.lane),
            interval_start_s: self.interval_start_s,
            k_vpk: self.k_vpk,
            v_kmh: self.v_kmh,
            q_vph: self.v_kmh.map(|_| self.q_vph),
            source: Source::GroundTruth,
            sample_count: self.vehicle_steps,
        }
    }
}

/// Lane-scope ground-truth states for lanes that held a vehicle.
pub fn ground_truth_states(gt: &[GroundTruthState]) -> Vec<TrafficState> {
    gt.iter()
        .filter(|s| s.observed())
        .map(GroundTruthState::to_traffic_state)
        .collect()
}

/// Per-step estimates of one observer inside one scope and interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSeries {
    pub observer: VehicleId,
    pub points: Vec<PointEstimate>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Two-stage mean over observers. Returns `None` when no observer has a
/// valid step, so gaps are never zero-filled.
pub fn aggregate_interval(
    series: &[ObserverSeries],
    interval_start_s: f64,
    scope: Scope,
    source: Source,
) -> Option<TrafficState> {
    let per_observer: Vec<(f64, Option<f64>, Option<f64>)> = series
        .iter()
        .filter(|s| !s.points.is_empty())
        .map(|s| {
            (
                mean(s.points.iter().map(|p| p.k_vpk)).expect("non-empty"),
                mean(s.points.iter().filter_map(|p| p.v_kmh)),
                mean(s.points.iter().filter_map(|p| p.q_vph)),
            )
        })
        .collect();
    if per_observer.is_empty() {
        return None;
    }
    let k = mean(per_observer.iter().map(|o| o.0))?;
    let v = mean(per_observer.iter().filter_map(|o| o.1));
    let q = v.and(mean(per_observer.iter().filter_map(|o| o.2)));
    Some(TrafficState {
        scope,
        interval_start_s,
        k_vpk: k,
        v_kmh: v,
        q_vph: q,
        source,
        sample_count: per_observer.len(),
    })
}

/// Observer-count weighted mean of the MO and PO states of one scope and
/// interval.
pub fn combine_sources(mo: Option<&TrafficState>, po: Option<&TrafficState>) -> Option<TrafficState> {
    let parts: Vec<&TrafficState> = mo.into_iter().chain(po).collect();
    let first = *parts.first()?;
    let weighted = |get: &dyn Fn(&TrafficState) -> Option<f64>| {
        let (sum, w) = parts
            .iter()
            .filter_map(|s| get(s).map(|x| (x * s.sample_count as f64, s.sample_count as f64)))
            .fold((0.0, 0.0), |(a, b), (x, w)| (a + x, b + w));
        (w > 0.0).then(|| sum / w)
    };
    let k = weighted(&|s| Some(s.k_vpk))?;
    let v = weighted(&|s| s.v_kmh);
    let q = v.and(weighted(&|s| s.q_vph));
    Some(TrafficState {
        scope: first.scope,
        interval_start_s: first.interval_start_s,
        k_vpk: k,
        v_kmh: v,
        q_vph: q,
        source: Source::Combined,
        sample_count: parts.iter().map(|s| s.sample_count).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RollupTarget {
    Cluster,
    Network,
}

/// Unweighted mean of lane-scope states per target scope, interval and
/// source. Scopes without any estimated lane in an interval are omitted.
/// Output is ordered by interval, scope, then source.
pub fn scope_rollup(
    lane_states: &[TrafficState],
    mapping: &BTreeMap<LaneId, ClusterId>,
    target: RollupTarget,
) -> Result<Vec<TrafficState>, EstimationError> {
    type Key = (u64, Scope, Source);
    let mut groups: BTreeMap<Key, (f64, Vec<&TrafficState>)> = BTreeMap::new();
    for s in lane_states {
        let Scope::Lane(lane) = s.scope else {
            continue;
        };
        let scope = match target {
            RollupTarget::Network => Scope::Network,
            RollupTarget::Cluster => Scope::Cluster(
                *mapping
                    .get(&lane)
                    .ok_or(EstimationError::UnmappedLane(lane.0))?,
            ),
        };
        // interval starts are non-negative, so bit order equals numeric order
        groups
            .entry((s.interval_start_s.to_bits(), scope, s.source))
            .or_insert_with(|| (s.interval_start_s, Vec::new()))
            .1
            .push(s);
    }
    Ok(groups
        .into_iter()
        .map(|((_, scope, source), (ts, members))| {
            let k = mean(members.iter().map(|s| s.k_vpk)).expect("non-empty group");
            let v = mean(members.iter().filter_map(|s| s.v_kmh));
            let q = v.and(mean(members.iter().filter_map(|s| s.q_vph)));
            TrafficState {
                scope,
                interval_start_s: ts,
                k_vpk: k,
                v_kmh: v,
                q_vph: q,
                source,
                sample_count: members.iter().map(|s| s.sample_count).sum(),
            }
        })
        .collect())
}

/// Observer's contiguous stay on one lane within one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneStay {
    pub observer: VehicleId,
    pub kind: ObserverKind,
    pub lane: LaneId,
    pub interval_start_s: f64,
    pub first_time_s: f64,
    pub steps: usize,
    pub k_vpk: f64,
    pub v_kmh: Option<f64>,
    pub q_vph: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimationRun {
    /// Lane-scope MO, PO and combined states.
    pub states: Vec<TrafficState>,
    pub lane_stays: Vec<LaneStay>,
    pub assignments: Vec<ObserverAssignment>,
    pub observations: usize,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EstimateLogError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

struct IntervalResult {
    states: Vec<TrafficState>,
    stays: Vec<LaneStay>,
    observations: usize,
}

fn estimate_interval(
    log: &TrajectoryLog,
    network: &RoadNetwork,
    sensors: &SensorConfig,
    interval: &Interval,
    assignment: &ObserverAssignment,
) -> Result<IntervalResult, DetectionError> {
    // (lane, kind) -> observer -> points
    let mut grouped: BTreeMap<(LaneId, ObserverKind), BTreeMap<VehicleId, Vec<PointEstimate>>> = BTreeMap::new();
    // observer -> open stay
    let mut stays: Vec<LaneStay> = Vec::new();
    let mut open: BTreeMap<(ObserverKind, VehicleId), (usize, Vec<PointEstimate>)> = BTreeMap::new();
    let mut observations = 0;

    let close = |stay_index: usize, points: &[PointEstimate], stays: &mut Vec<LaneStay>| {
        let stay = &mut stays[stay_index];
        stay.steps = points.len();
        stay.k_vpk = mean(points.iter().map(|p| p.k_vpk)).unwrap_or(0.0);
        stay.v_kmh = mean(points.iter().filter_map(|p| p.v_kmh));
        stay.q_vph = stay.v_kmh.and(mean(points.iter().filter_map(|p| p.q_vph)));
    };

    for frame in interval.frames.clone() {
        let snapshot = WorldSnapshot::new(log.time_of(frame), &log.frames[frame], network);
        let mut poses = Vec::with_capacity(assignment.mo_ids.len() + assignment.po_anchors.len());
        for &id in &assignment.mo_ids {
            if let Some(v) = snapshot.vehicle(id) {
                poses.push(ObserverPose {
                    observer_id: id,
                    kind: ObserverKind::Moving,
                    lane: v.lane,
                    position_m: v.position_m,
                    speed_mps: v.speed_mps,
                    vehicle: Some(id),
                });
            }
        }
        for anchor in &assignment.po_anchors {
            poses.push(ObserverPose {
                observer_id: anchor.vehicle,
                kind: ObserverKind::Parking,
                lane: anchor.lane,
                position_m: anchor.position_m,
                speed_mps: 0.0,
                vehicle: None,
            });
        }
        for pose in poses {
            let obs = detect(&pose, &snapshot, sensors, network)?;
            observations += 1;
            let Ok(point) = point_estimate(&obs) else {
                continue;
            };
            grouped
                .entry((pose.lane, pose.kind))
                .or_default()
                .entry(pose.observer_id)
                .or_default()
                .push(point);

            let key = (pose.kind, pose.observer_id);
            let same_lane = open
                .get(&key)
                .is_some_and(|(idx, _)| stays[*idx].lane == pose.lane);
            if !same_lane {
                if let Some((idx, points)) = open.remove(&key) {
                    close(idx, &points, &mut stays);
                }
                stays.push(LaneStay {
                    observer: pose.observer_id,
                    kind: pose.kind,
                    lane: pose.lane,
                    interval_start_s: interval.start_s,
                    first_time_s: snapshot.time_s,
                    steps: 0,
                    k_vpk: 0.0,
                    v_kmh: None,
                    q_vph: None,
                });
                open.insert(key, (stays.len() - 1, Vec::new()));
            }
            open.get_mut(&key).expect("stay just opened").1.push(point);
        }
    }
    for (_, (idx, points)) in open {
        close(idx, &points, &mut stays);
    }

    let mut lanes: BTreeMap<LaneId, [Option<TrafficState>; 2]> = BTreeMap::new();
    for ((lane, kind), by_observer) in grouped {
        let series: Vec<ObserverSeries> = by_observer
            .into_iter()
            .map(|(observer, points)| ObserverSeries { observer, points })
            .collect();
        let (slot, source) = match kind {
            ObserverKind::Moving => (0, Source::MoEstimate),
            ObserverKind::Parking => (1, Source::PoEstimate),
        };
        lanes.entry(lane).or_default()[slot] =
            aggregate_interval(&series, interval.start_s, Scope::Lane(lane), source);
    }
    let mut states = Vec::new();
    for [mo, po] in lanes.into_values() {
        let combined = combine_sources(mo.as_ref(), po.as_ref());
        states.extend(mo);
        states.extend(po);
        states.extend(combined);
    }
    stays.sort_by_key(|s| (s.kind, s.observer));
    Ok(IntervalResult {
        states,
        stays,
        observations,
    })
}

/// Samples observers, runs detection at every step and aggregates
/// lane-scope estimates for each interval. `workers > 1` spreads intervals
/// over a thread pool; output order does not depend on it.
pub fn estimate_log(
    log: &TrajectoryLog,
    network: &RoadNetwork,
    agg: &AggregationConfig,
    policy: &ObserverPolicy,
    sensors: &SensorConfig,
    workers: usize,
) -> Result<EstimationRun, EstimateLogError> {
    sensors.validate()?;
    let intervals = agg.intervals(log)?;
    let assignments = sample_observers(log, agg, policy)?;
    let jobs: Vec<(&Interval, &ObserverAssignment)> = intervals.iter().zip(&assignments).collect();
    let run_job = |(interval, assignment): &(&Interval, &ObserverAssignment)| {
        estimate_interval(log, network, sensors, interval, assignment)
    };
    let results: Vec<Result<IntervalResult, DetectionError>> = run_jobs(&jobs, workers, run_job);

    let mut out = EstimationRun::default();
    for result in results {
        let r = result?;
        out.states.extend(r.states);
        out.lane_stays.extend(r.stays);
        out.observations += r.observations;
    }
    out.assignments = assignments;
    Ok(out)
}

#[cfg(feature = "parallel")]
fn run_jobs<J, R, F>(jobs: &[J], workers: usize, f: F) -> Vec<R>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 {
        return jobs.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| jobs.par_iter().map(&f).collect()),
        Err(_) => jobs.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs<J, R, F>(jobs: &[J], _workers: usize, f: F) -> Vec<R>
where
    F: Fn(&J) -> R,
{
    jobs.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{Detection, LaneRelation};

    fn obs(kind: ObserverKind, speeds: &[f64], ego_speed: f64, zone: f64) -> Observation {
        Observation {
            observer_id: VehicleId(0),
            kind,
            time_s: 0.0,
            ego_lane: LaneId(0),
            ego_speed_mps: ego_speed,
            detections: speeds
                .iter()
                .enumerate()
                .map(|(i, &s)| Detection {
                    vehicle: VehicleId(i as u64 + 1),
                    lane: LaneId(0),
                    relation: LaneRelation::Ego,
                    distance_m: 1.0,
                    speed_mps: s,
                })
                .collect(),
            zone_total_length_m: zone,
            degenerate_zone: zone <= 0.0,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn mo_density_with_four_detections() {
        let p = mo_point_estimate(&obs(ObserverKind::Moving, &[5.0; 4], 5.0, 150.0)).unwrap();
        assert!(close(p.k_vpk, 5000.0 / 150.0));
    }

    #[test]
    fn mo_ego_only() {
        let p = mo_point_estimate(&obs(ObserverKind::Moving, &[], 10.0, 300.0)).unwrap();
        assert_eq!(p.v_kmh, Some(36.0));
        assert!(close(p.k_vpk, 1000.0 / 300.0));
    }

    #[test]
    fn flow_is_density_times_speed() {
        // 2 detections + ego in a 150 m zone: k* = 20; speeds average 30 km/h
        let s = 30.0 / 3.6;
        let p = mo_point_estimate(&obs(ObserverKind::Moving, &[s, s], s, 150.0)).unwrap();
        assert!(close(p.k_vpk, 20.0));
        assert!(close(p.v_kmh.unwrap(), 30.0));
        assert!(close(p.q_vph.unwrap(), 600.0));
    }

    #[test]
    fn wrong_kind_rejected() {
        assert!(mo_point_estimate(&obs(ObserverKind::Parking, &[], 0.0, 150.0)).is_err());
        assert!(po_point_estimate(&obs(ObserverKind::Moving, &[], 0.0, 150.0)).is_err());
        assert_eq!(
            mo_point_estimate(&obs(ObserverKind::Moving, &[], 0.0, 0.0)),
            Err(EstimationError::EmptyZone)
        );
    }

    #[test]
    fn po_estimates() {
        let empty = po_point_estimate(&obs(ObserverKind::Parking, &[], 0.0, 150.0)).unwrap();
        assert_eq!((empty.k_vpk, empty.v_kmh, empty.q_vph), (0.0, None, None));
        let three = po_point_estimate(&obs(ObserverKind::Parking, &[10.0, 12.0, 14.0], 0.0, 150.0)).unwrap();
        assert!(close(three.k_vpk, 20.0));
        assert!(close(three.v_kmh.unwrap(), 43.2));
        let jam = po_point_estimate(&obs(ObserverKind::Parking, &[0.0], 0.0, 150.0)).unwrap();
        assert_eq!((jam.v_kmh, jam.q_vph), (Some(0.0), Some(0.0)));
    }

    fn pt(k: f64, v: Option<f64>) -> PointEstimate {
        PointEstimate {
            k_vpk: k,
            v_kmh: v,
            q_vph: v.map(|v| k * v),
        }
    }

    #[test]
    fn two_stage_mean_weights_observers_equally() {
        let a = ObserverSeries {
            observer: VehicleId(1),
            points: vec![pt(10.0, Some(20.0)); 299],
        };
        let b = ObserverSeries {
            observer: VehicleId(2),
            points: vec![pt(30.0, Some(40.0))],
        };
        let s = aggregate_interval(&[a, b], 0.0, Scope::Network, Source::MoEstimate).unwrap();
        assert_eq!(s.k_vpk, 20.0);
        assert_eq!(s.v_kmh, Some(30.0));
        assert_eq!(s.sample_count, 2);
    }

    #[test]
    fn constant_observer_is_identity() {
        let a = ObserverSeries {
            observer: VehicleId(1),
            points: vec![pt(30.0, Some(10.0)); 300],
        };
        let s = aggregate_interval(&[a], 0.0, Scope::Network, Source::MoEstimate).unwrap();
        assert_eq!(s.k_vpk, 30.0);
    }

    #[test]
    fn empty_parking_zone_counts_only_for_density() {
        let empty_po = ObserverSeries {
            observer: VehicleId(1),
            points: vec![pt(0.0, None); 10],
        };
        let busy_po = ObserverSeries {
            observer: VehicleId(2),
            points: vec![pt(20.0, Some(50.0)); 10],
        };
        let s = aggregate_interval(&[empty_po.clone(), busy_po], 0.0, Scope::Network, Source::PoEstimate).unwrap();
        assert_eq!(s.k_vpk, 10.0);
        assert_eq!(s.v_kmh, Some(50.0));
        assert_eq!(s.q_vph, Some(1000.0));
        let only_empty = aggregate_interval(&[empty_po], 0.0, Scope::Network, Source::PoEstimate).unwrap();
        assert_eq!((only_empty.v_kmh, only_empty.q_vph), (None, None));
        assert!(aggregate_interval(&[], 0.0, Scope::Network, Source::PoEstimate).is_none());
    }

    fn lane_state(lane: u32, k: f64, source: Source) -> TrafficState {
        TrafficState {
            scope: Scope::Lane(LaneId(lane)),
            interval_start_s: 0.0,
            k_vpk: k,
            v_kmh: Some(2.0 * k),
            q_vph: Some(2.0 * k * k),
            source,
            sample_count: 1,
        }
    }

    #[test]
    fn combined_weights_by_observer_count() {
        let mut mo = lane_state(0, 10.0, Source::MoEstimate);
        mo.sample_count = 3;
        let po = lane_state(0, 30.0, Source::PoEstimate);
        let c = combine_sources(Some(&mo), Some(&po)).unwrap();
        assert_eq!(c.k_vpk, 15.0);
        assert_eq!(c.sample_count, 4);
        assert_eq!(combine_sources(Some(&mo), None).unwrap().k_vpk, 10.0);
        assert!(combine_sources(None, None).is_none());
    }

    #[test]
    fn rollups() {
        let states = vec![
            lane_state(0, 10.0, Source::MoEstimate),
            lane_state(1, 20.0, Source::MoEstimate),
        ];
        let mapping = BTreeMap::from([(LaneId(0), ClusterId(0)), (LaneId(1), ClusterId(0))]);
        let c = scope_rollup(&states, &mapping, RollupTarget::Cluster).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].k_vpk, 15.0);
        assert_eq!(c[0].sample_count, 2);
        let n = scope_rollup(&states[..1], &BTreeMap::new(), RollupTarget::Network).unwrap();
        assert_eq!(n[0].k_vpk, 10.0);
        assert_eq!(n[0].scope, Scope::Network);
        assert_eq!(
            scope_rollup(&states, &BTreeMap::new(), RollupTarget::Cluster),
            Err(EstimationError::UnmappedLane(0))
        );
    }
}
