//! Discrete-time car-following simulation.
//!
//! Each step applies the Intelligent Driver Model to every vehicle using
//! the previous step's state, then advances speeds and positions with an
//! explicit Euler update (`v' = max(0, v + a dt)`, `x' = x + v' dt`).
//! A vehicle's new front never passes its leader's previous rear, which
//! keeps lanes overlap-free because leaders never move backwards.
//!
//! There is no lane changing. Vehicles entering the network take origin
//! lanes round-robin; at edge transitions they keep their lane index,
//! clamped to the downstream edge's lane count.

use std::collections::{BTreeMap, VecDeque};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::error::SimulationError;
use crate::network::{EdgeId, LaneId, RoadNetwork};
use crate::trajectory::{TrajectoryLog, VehicleId, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub time_headway_s: f64,
    pub max_accel_mps2: f64,
    pub comfortable_decel_mps2: f64,
    pub jam_distance_m: f64,
    pub vehicle_length_m: f64,
    pub accel_exponent: i32,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            time_headway_s: 1.5,
            max_accel_mps2: 1.0,
            comfortable_decel_mps2: 1.5,
            jam_distance_m: 2.0,
            vehicle_length_m: 5.0,
            accel_exponent: 4,
        }
    }
}

impl IdmParams {
    /// IDM acceleration with desired speed `desired_mps`. `leader` is the
    /// bumper-to-bumper gap and the leader's speed.
    pub fn acceleration(&self, speed: f64, desired_mps: f64, leader: Option<(f64, f64)>) -> f64 {
        let a = self.max_accel_mps2;
        let free = 1.0 - (speed / desired_mps).powi(self.accel_exponent);
        match leader {
            None => a * free,
            Some((gap, leader_speed)) => {
                let approach = speed - leader_speed;
                let dynamic = speed * self.time_headway_s
                    + speed * approach / (2.0 * (a * self.comfortable_decel_mps2).sqrt());
                let desired_gap = self.jam_distance_m + dynamic.max(0.0);
                let gap = gap.max(1e-3);
                a * (free - (desired_gap / gap).powi(2))
            }
        }
    }

    /// Steady-state speed at bumper-to-bumper gap `gap_m` (bisection on the
    /// IDM equilibrium condition).
    pub fn equilibrium_speed(&self, gap_m: f64, desired_mps: f64) -> f64 {
        if gap_m <= self.jam_distance_m {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, desired_mps);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.acceleration(mid, desired_mps, Some((gap_m, mid))) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Vehicles placed on an edge at t = 0 with uniform spacing. They follow
/// the first downstream edge at every node, so a ring keeps them forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub edge: u32,
    /// Lane to fill; all lanes of the edge when absent.
    #[serde(default)]
    pub lane_index: Option<usize>,
    /// Vehicles per filled lane.
    pub count: usize,
    #[serde(default)]
    pub offset_m: f64,
    #[serde(default)]
    pub speed_mps: f64,
}

/// Poisson arrivals at the start of `origin` during `[begin_s, end_s)`.
/// Vehicles follow the fewest-edges path to `destination`, or circulate
/// like placed vehicles when no destination is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub origin: u32,
    #[serde(default)]
    pub destination: Option<u32>,
    pub rate_vph: f64,
    #[serde(default)]
    pub begin_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    #[serde(default)]
    pub placements: Vec<Placement>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

impl DemandSpec {
    pub fn is_empty(&self) -> bool {
        self.placements.is_empty() && self.flows.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimReport {
    pub inserted: usize,
    pub exited: usize,
    /// Arrivals still waiting for insertion space at the horizon.
    pub queued_at_end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub log: TrajectoryLog,
    pub report: SimReport,
}

#[derive(Debug, Clone)]
enum Route {
    Circulate,
    Path { edges: Vec<EdgeId>, at: usize },
}

#[derive(Debug, Clone)]
struct SimVehicle {
    id: VehicleId,
    lane: LaneId,
    position: f64,
    speed: f64,
    length: f64,
    route: Route,
}

struct FlowState {
    origin: EdgeId,
    path: Option<Vec<EdgeId>>,
    rng: ChaCha8Rng,
    exp: Exp<f64>,
    next_arrival: f64,
    end_s: f64,
}

pub fn simulate(
    network: &RoadNetwork,
    demand: &DemandSpec,
    horizon_s: f64,
    step_s: f64,
    seed: u64,
) -> Result<SimulationRun, SimulationError> {
    simulate_with(network, demand, horizon_s, step_s, seed, &IdmParams::default())
}

pub fn simulate_with(
    network: &RoadNetwork,
    demand: &DemandSpec,
    horizon_s: f64,
    step_s: f64,
    seed: u64,
    idm: &IdmParams,
) -> Result<SimulationRun, SimulationError> {
    let invalid = |m: String| SimulationError::Invalid(m);
    if !(step_s > 0.0) || !step_s.is_finite() {
        return Err(invalid(format!("step must be positive, got {step_s}")));
    }
    let ratio = horizon_s / step_s;
    if !(horizon_s > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
        return Err(invalid(format!(
            "horizon {horizon_s} s is not a positive multiple of step {step_s} s"
        )));
    }
    let n_frames = ratio.round() as usize;

    let mut vehicles: Vec<SimVehicle> = Vec::new();
    let mut next_id = 0u64;
    for placement in &demand.placements {
        let edge = network
            .edge(EdgeId(placement.edge))
            .ok_or_else(|| invalid(format!("placement references unknown edge {}", placement.edge)))?;
        let lanes: Vec<LaneId> = match placement.lane_index {
            Some(i) => vec![*edge.lanes.get(i).ok_or_else(|| {
                invalid(format!("edge {} has no lane index {i}", edge.id))
            })?],
            None => edge.lanes.clone(),
        };
        if placement.count == 0 {
            continue;
        }
        let spacing = edge.length_m / placement.count as f64;
        if spacing < idm.vehicle_length_m {
            return Err(invalid(format!(
                "placement of {} vehicles on edge {} overlaps (spacing {spacing} m)",
                placement.count, edge.id
            )));
        }
        if !(0.0..spacing).contains(&placement.offset_m) {
            return Err(invalid(format!(
                "placement offset {} must lie in [0, {spacing})",
                placement.offset_m
            )));
        }
        if placement.speed_mps < 0.0 {
            return Err(invalid("placement speed must be non-negative".into()));
        }
        for lane in lanes {
            for j in 0..placement.count {
                vehicles.push(SimVehicle {
                    id: VehicleId(next_id),
                    lane,
                    position: placement.offset_m + j as f64 * spacing,
                    speed: placement.speed_mps,
                    length: idm.vehicle_length_m,
                    route: Route::Circulate,
                });
                next_id += 1;
            }
        }
    }

    let mut flows = Vec::with_capacity(demand.flows.len());
    for (i, flow) in demand.flows.iter().enumerate() {
        let origin = EdgeId(flow.origin);
        network
            .edge(origin)
            .ok_or_else(|| invalid(format!("flow references unknown origin edge {origin}")))?;
        let path = match flow.destination {
            Some(dest) => Some(network.shortest_path(origin, EdgeId(dest)).ok_or_else(|| {
                invalid(format!("flow destination {dest} unreachable from {origin}"))
            })?),
            None => None,
        };
        if !(flow.rate_vph >= 0.0) || !(flow.end_s >= flow.begin_s) {
            return Err(invalid(format!("flow {i}: rate must be >= 0 and end >= begin")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let rate_per_s = flow.rate_vph / 3600.0;
        let exp = Exp::new(rate_per_s.max(f64::MIN_POSITIVE)).expect("positive rate");
        let next_arrival = if rate_per_s > 0.0 {
            flow.begin_s + rng.sample(exp)
        } else {
            f64::INFINITY
        };
        flows.push(FlowState {
            origin,
            path,
            rng,
            exp,
            next_arrival,
            end_s: flow.end_s,
        });
    }

    let mut queues: BTreeMap<EdgeId, VecDeque<(VehicleId, Route)>> = BTreeMap::new();
    let mut round_robin: BTreeMap<EdgeId, usize> = BTreeMap::new();
    let mut report = SimReport::default();
    let mut frames = Vec::with_capacity(n_frames);

    for frame in 0..n_frames {
        let t = frame as f64 * step_s;
        for flow in &mut flows {
            while flow.next_arrival < t + step_s && flow.next_arrival < flow.end_s {
                let route = match &flow.path {
                    Some(edges) => Route::Path {
                        edges: edges.clone(),
                        at: 0,
                    },
                    None => Route::Circulate,
                };
                queues
                    .entry(flow.origin)
                    .or_default()
                    .push_back((VehicleId(next_id), route));
                next_id += 1;
                let gap = flow.rng.sample(flow.exp);
                flow.next_arrival += gap;
            }
        }
        insert_queued(network, idm, &mut vehicles, &mut queues, &mut round_robin, &mut report);

        let mut snapshot: Vec<VehicleState> = vehicles
            .iter()
            .map(|v| VehicleState {
                vehicle: v.id,
                lane: v.lane,
                position_m: v.position,
                speed_mps: v.speed,
                length_m: v.length,
            })
            .collect();
        snapshot.sort_by_key(|v| v.vehicle);
        frames.push(snapshot);

        if frame + 1 < n_frames {
            report.exited += advance(network, idm, &mut vehicles, step_s);
        }
    }
    report.queued_at_end = queues.values().map(VecDeque::len).sum();

    Ok(SimulationRun {
        log: TrajectoryLog::new(0.0, step_s, frames),
        report,
    })
}

fn insert_queued(
    network: &RoadNetwork,
    idm: &IdmParams,
    vehicles: &mut Vec<SimVehicle>,
    queues: &mut BTreeMap<EdgeId, VecDeque<(VehicleId, Route)>>,
    round_robin: &mut BTreeMap<EdgeId, usize>,
    report: &mut SimReport,
) {
    for (&origin, queue) in queues.iter_mut() {
        let edge = network.edge(origin).expect("validated origin");
        while let Some((id, _)) = queue.front() {
            let counter = round_robin.entry(origin).or_default();
            let lane = edge.lanes[*counter % edge.lanes.len()];
            let last = vehicles
                .iter()
                .filter(|v| v.lane == lane)
                .min_by(|a, b| a.position.total_cmp(&b.position));
            let speed = match last {
                None => edge.speed_limit_mps,
                Some(leader) => {
                    let speed = edge.speed_limit_mps.min(leader.speed);
                    let needed = idm.jam_distance_m + speed * idm.time_headway_s;
                    if leader.position - leader.length < needed {
                        break;
                    }
                    speed
                }
            };
            let id = *id;
            let (_, route) = queue.pop_front().expect("front exists");
            *counter += 1;
            vehicles.push(SimVehicle {
                id,
                lane,
                position: 0.0,
                speed,
                length: idm.vehicle_length_m,
                route,
            });
            report.inserted += 1;
        }
    }
}

fn next_edge(network: &RoadNetwork, vehicle: &SimVehicle) -> Option<EdgeId> {
    match &vehicle.route {
        Route::Circulate => network
            .downstream(network.lane(vehicle.lane).edge)
            .first()
            .copied(),
        Route::Path { edges, at } => edges.get(at + 1).copied(),
    }
}

fn next_lane(network: &RoadNetwork, vehicle: &SimVehicle) -> Option<LaneId> {
    let edge = network.edge(next_edge(network, vehicle)?)?;
    let index = network.lane(vehicle.lane).index.min(edge.lanes.len() - 1);
    Some(edge.lanes[index])
}

/// Advances every vehicle by one step. Returns the number of vehicles that
/// left the network.
fn advance(network: &RoadNetwork, idm: &IdmParams, vehicles: &mut Vec<SimVehicle>, dt: f64) -> usize {
    let mut by_lane: Vec<Vec<usize>> = vec![Vec::new(); network.lanes().len()];
    for (i, v) in vehicles.iter().enumerate() {
        by_lane[v.lane.0 as usize].push(i);
    }
    for list in &mut by_lane {
        list.sort_by(|&a, &b| {
            vehicles[a]
                .position
                .total_cmp(&vehicles[b].position)
                .then(vehicles[a].id.cmp(&vehicles[b].id))
        });
    }

    // (new position, new speed) from the old state of everyone
    let mut updates = Vec::with_capacity(vehicles.len());
    for list in &by_lane {
        for (rank, &i) in list.iter().enumerate() {
            let v = &vehicles[i];
            let lane = network.lane(v.lane);
            // (gap, leader speed, furthest allowed front in own-lane coords)
            let leader = if let Some(&j) = list.get(rank + 1) {
                let l = &vehicles[j];
                Some((l.position - l.length - v.position, l.speed, l.position - l.length))
            } else {
                next_lane(network, v).and_then(|nl| {
                    let &j = by_lane[nl.0 as usize].first()?;
                    if j == i {
                        return None;
                    }
                    let l = &vehicles[j];
                    let rear = lane.length_m + l.position - l.length;
                    Some((rear - v.position, l.speed, rear))
                })
            };
            let accel = idm.acceleration(
                v.speed,
                lane.speed_limit_mps,
                leader.map(|(gap, speed, _)| (gap, speed)),
            );
            let mut speed = (v.speed + accel * dt).max(0.0);
            let mut position = v.position + speed * dt;
            if let Some((_, _, limit)) = leader {
                if position > limit {
                    position = limit.max(v.position);
                    speed = (position - v.position) / dt;
                }
            }
            updates.push((i, position, speed));
        }
    }

    let mut exited = vec![false; vehicles.len()];
    for (i, position, speed) in updates {
        let v = &mut vehicles[i];
        v.position = position;
        v.speed = speed;
        loop {
            let len = network.lane(v.lane).length_m;
            if v.position <= len {
                break;
            }
            match next_lane(network, v) {
                Some(nl) => {
                    v.position -= len;
                    v.lane = nl;
                    if let Route::Path { at, .. } = &mut v.route {
                        *at += 1;
                    }
                }
                None => {
                    exited[i] = true;
                    break;
                }
            }
        }
    }
    let count = exited.iter().filter(|&&e| e).count();
    let mut idx = 0;
    vehicles.retain(|_| {
        let keep = !exited[idx];
        idx += 1;
        keep
    });
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{builtin_network, Builtin};

    fn ring_demand(count: usize, speed: f64) -> DemandSpec {
        DemandSpec {
            placements: vec![Placement {
                edge: 0,
                lane_index: None,
                count,
                offset_m: 0.0,
                speed_mps: speed,
            }],
            flows: vec![],
        }
    }

    fn assert_no_overlap(log: &TrajectoryLog, network: &RoadNetwork) {
        for frame in &log.frames {
            let mut by_lane: BTreeMap<LaneId, Vec<&VehicleState>> = BTreeMap::new();
            for v in frame {
                let lane = network.lane(v.lane);
                assert!(v.position_m >= 0.0 && v.position_m <= lane.length_m);
                assert!(v.speed_mps >= 0.0);
                by_lane.entry(v.lane).or_default().push(v);
            }
            for list in by_lane.values_mut() {
                list.sort_by(|a, b| a.position_m.total_cmp(&b.position_m));
                for pair in list.windows(2) {
                    assert!(pair[1].rear_m() - pair[0].position_m >= -1e-9);
                }
            }
        }
    }

    #[test]
    fn uniform_ring_stays_uniform() {
        let net = builtin_network(Builtin::ring(1000.0, 1)).unwrap();
        let run = simulate(&net, &ring_demand(10, 5.0), 600.0, 1.0, 1).unwrap();
        for frame in &run.log.frames {
            let mut pos: Vec<f64> = frame.iter().map(|v| v.position_m).collect();
            pos.sort_by(f64::total_cmp);
            for pair in pos.windows(2) {
                assert!((pair[1] - pair[0] - 100.0).abs() < 1e-6, "{pos:?}");
            }
            let wrap = pos[0] + 1000.0 - pos[9];
            assert!((wrap - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_demand_yields_empty_frames() {
        let net = builtin_network(Builtin::ring(1000.0, 1)).unwrap();
        let run = simulate(&net, &DemandSpec::default(), 60.0, 1.0, 1).unwrap();
        assert_eq!(run.log.frames.len(), 60);
        assert!(run.log.frames.iter().all(Vec::is_empty));
    }

    #[test]
    fn closed_ring_conserves_vehicles() {
        let net = builtin_network(Builtin::ring(1000.0, 1)).unwrap();
        let run = simulate(&net, &ring_demand(50, 0.0), 600.0, 1.0, 3).unwrap();
        assert!(run.log.frames.iter().all(|f| f.len() == 50));
        assert_no_overlap(&run.log, &net);
    }

    #[test]
    fn corridor_flow_is_overlap_free_and_deterministic() {
        let net = builtin_network(Builtin::corridor(3, 2, 300.0)).unwrap();
        let demand = DemandSpec {
            placements: vec![],
            flows: vec![FlowSpec {
                origin: 0,
                destination: Some(2),
                rate_vph: 2400.0,
                begin_s: 0.0,
                end_s: 600.0,
            }],
        };
        let a = simulate(&net, &demand, 900.0, 1.0, 11).unwrap();
        let b = simulate(&net, &demand, 900.0, 1.0, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.report.inserted > 300);
        assert!(a.report.exited > 0);
        assert_no_overlap(&a.log, &net);
        let c = simulate(&net, &demand, 900.0, 1.0, 12).unwrap();
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn oversaturated_origin_queues() {
        let net = builtin_network(Builtin::corridor(1, 1, 200.0)).unwrap();
        let demand = DemandSpec {
            placements: vec![],
            flows: vec![FlowSpec {
                origin: 0,
                destination: None,
                rate_vph: 20000.0,
                begin_s: 0.0,
                end_s: 300.0,
            }],
        };
        let run = simulate(&net, &demand, 300.0, 1.0, 5).unwrap();
        assert!(run.report.queued_at_end > 0);
        assert_no_overlap(&run.log, &net);
    }

    #[test]
    fn invalid_setup_is_rejected() {
        let net = builtin_network(Builtin::ring(1000.0, 1)).unwrap();
        assert!(simulate(&net, &DemandSpec::default(), 10.5, 1.0, 0).is_err());
        assert!(simulate(&net, &DemandSpec::default(), 10.0, 0.0, 0).is_err());
        let bad = DemandSpec {
            placements: vec![],
            flows: vec![FlowSpec {
                origin: 7,
                destination: None,
                rate_vph: 10.0,
                begin_s: 0.0,
                end_s: 10.0,
            }],
        };
        assert!(simulate(&net, &bad, 10.0, 1.0, 0).is_err());
        assert!(simulate(&net, &ring_demand(300, 0.0), 10.0, 1.0, 0).is_err());
    }

    #[test]
    fn equilibrium_speed_zeroes_acceleration() {
        let idm = IdmParams::default();
        let v = idm.equilibrium_speed(15.0, 13.89);
        assert!(v > 0.0 && v < 13.89);
        assert!(idm.acceleration(v, 13.89, Some((15.0, v))).abs() < 1e-9);
    }
}
