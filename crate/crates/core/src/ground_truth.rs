//! Per-lane ground-truth traffic states from the full simulator state.
//!
//! Density is the time mean of the instantaneous lane density over the
//! frames of an interval. Flow counts vehicles entering the lane:
//! `q = n_veh * 3600 / t_agg`.

use std::collections::BTreeMap;

use crate::aggregation::AggregationConfig;
use crate::error::PolicyError;
use crate::network::{LaneId, RoadNetwork};
use crate::trajectory::TrajectoryLog;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthState {
    pub lane: LaneId,
    pub interval_start_s: f64,
    /// veh/km
    pub k_vpk: f64,
    /// veh/h
    pub q_vph: f64,
    /// km/h, `q / k`; absent when the lane carried no vehicle.
    pub v_kmh: Option<f64>,
    /// km/h, mean speed over all vehicle-steps on the lane (distance
    /// travelled over time spent).
    pub space_mean_speed_kmh: Option<f64>,
    pub vehicle_steps: usize,
    pub entries: usize,
}

impl GroundTruthState {
    /// Whether the lane held at least one vehicle during the interval.
    pub fn observed(&self) -> bool {
        self.vehicle_steps > 0
    }
}

/// One state per lane for every interval holding at least one frame,
/// ordered by interval then lane.
pub fn ground_truth(
    log: &TrajectoryLog,
    network: &RoadNetwork,
    agg: &AggregationConfig,
) -> Result<Vec<GroundTruthState>, PolicyError> {
    let intervals = agg.intervals(log)?;
    let n_lanes = network.lanes().len();
    let mut entries_by_frame: BTreeMap<usize, Vec<LaneId>> = BTreeMap::new();
    for e in &log.entries {
        entries_by_frame.entry(e.frame).or_default().push(e.lane);
    }

    let mut out = Vec::with_capacity(intervals.len() * n_lanes);
    for interval in intervals {
        let mut steps = vec![0usize; n_lanes];
        let mut speed_sum = vec![0.0f64; n_lanes];
        let mut entries = vec![0usize; n_lanes];
        for frame in interval.frames.clone() {
            for v in &log.frames[frame] {
                let i = v.lane.0 as usize;
                steps[i] += 1;
                speed_sum[i] += v.speed_mps;
            }
        }
        for (_, lanes) in entries_by_frame.range(interval.frames.clone()) {
            for lane in lanes {
                entries[lane.0 as usize] += 1;
            }
        }
        let n_frames = interval.frames.len() as f64;
        let duration_s = n_frames * log.step_s;
        for lane in network.lanes() {
            let i = lane.id.0 as usize;
            let k = steps[i] as f64 / n_frames / lane.length_m * 1000.0;
            let q = entries[i] as f64 * 3600.0 / duration_s;
            let (v, sms) = if steps[i] > 0 {
                (Some(q / k), Some(speed_sum[i] / steps[i] as f64 * 3.6))
            } else {
                (None, None)
            };
            out.push(GroundTruthState {
                lane: lane.id,
                interval_start_s: interval.start_s,
                k_vpk: k,
                q_vph: q,
                v_kmh: v,
                space_mean_speed_kmh: sms,
                vehicle_steps: steps[i],
                entries: entries[i],
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScopeMean {
    pub interval_start_s: f64,
    pub k_avg_vpk: f64,
    pub q_avg_vph: f64,
    pub lanes: usize,
}

/// Unweighted mean of `k` and `q` over the lanes of `scope`, per interval.
/// Lanes that held no vehicle in an interval are skipped unless
/// `include_unobserved` is set. Intervals with no contributing lane are
/// omitted.
pub fn network_means(
    states: &[GroundTruthState],
    scope: &[LaneId],
    include_unobserved: bool,
) -> Result<Vec<ScopeMean>, crate::error::EstimationError> {
    if scope.is_empty() {
        return Err(crate::error::EstimationError::EmptyScope);
    }
    let scope: std::collections::BTreeSet<LaneId> = scope.iter().copied().collect();
    let mut acc: BTreeMap<u64, (f64, f64, f64, usize)> = BTreeMap::new();
    for s in states {
        if !scope.contains(&s.lane) || !(include_unobserved || s.observed()) {
            continue;
        }
        let slot = acc
            .entry(s.interval_start_s.to_bits())
            .or_insert((s.interval_start_s, 0.0, 0.0, 0));
        slot.1 += s.k_vpk;
        slot.2 += s.q_vph;
        slot.3 += 1;
    }
    let mut out: Vec<ScopeMean> = acc
        .into_values()
        .map(|(ts, k, q, n)| ScopeMean {
            interval_start_s: ts,
            k_avg_vpk: k / n as f64,
            q_avg_vph: q / n as f64,
            lanes: n,
        })
        .collect();
    out.sort_by(|a, b| a.interval_start_s.total_cmp(&b.interval_start_s));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{builtin_network, Builtin};
    use crate::trajectory::{VehicleId, VehicleState};

    fn v(id: u64, lane: u32, pos: f64, speed: f64) -> VehicleState {
        VehicleState {
            vehicle: VehicleId(id),
            lane: LaneId(lane),
            position_m: pos,
            speed_mps: speed,
            length_m: 5.0,
        }
    }

    #[test]
    fn flow_from_entry_count() {
        // 25 vehicles appear on the lane once each during the interval
        let net = builtin_network(Builtin::corridor(1, 1, 1000.0)).unwrap();
        let mut frames = vec![Vec::new(); 300];
        for i in 0..25 {
            frames[1 + i * 10].push(v(i as u64, 0, 0.0, 10.0));
        }
        let log = TrajectoryLog::new(0.0, 1.0, frames);
        let gt = ground_truth(&log, &net, &AggregationConfig::default()).unwrap();
        assert_eq!(gt.len(), 1);
        assert_eq!(gt[0].entries, 25);
        assert_eq!(gt[0].q_vph, 300.0);
    }

    #[test]
    fn stationary_vehicle_density() {
        let net = builtin_network(Builtin::corridor(1, 1, 1000.0)).unwrap();
        let frames = vec![vec![v(0, 0, 400.0, 0.0)]; 300];
        let log = TrajectoryLog::new(0.0, 1.0, frames);
        let gt = ground_truth(&log, &net, &AggregationConfig::default()).unwrap();
        assert_eq!(gt[0].k_vpk, 1.0);
        assert_eq!(gt[0].q_vph, 0.0);
        assert_eq!(gt[0].v_kmh, Some(0.0));
    }

    #[test]
    fn empty_lane_has_no_speed() {
        let net = builtin_network(Builtin::corridor(2, 1, 500.0)).unwrap();
        let frames = vec![vec![v(0, 0, 100.0, 3.0)]; 10];
        let log = TrajectoryLog::new(0.0, 1.0, frames);
        let gt = ground_truth(&log, &net, &AggregationConfig::with_t_agg(10.0)).unwrap();
        assert_eq!(gt.len(), 2);
        assert_eq!(gt[1].k_vpk, 0.0);
        assert_eq!(gt[1].v_kmh, None);
        assert!(!gt[1].observed());
    }

    #[test]
    fn uniform_ring_flow_matches_density_times_speed() {
        // spacing 50 m, 10 m/s, 1000 m ring: k = 20 veh/km, q = k v
        let net = builtin_network(Builtin::ring(1000.0, 1)).unwrap();
        let frames: Vec<Vec<VehicleState>> = (0..300)
            .map(|t| {
                (0..20)
                    .map(|j| v(j, 0, (j as f64 * 50.0 + 10.0 * t as f64) % 1000.0, 10.0))
                    .collect()
            })
            .collect();
        let log = TrajectoryLog::new(0.0, 1.0, frames);
        let gt = ground_truth(&log, &net, &AggregationConfig::default()).unwrap();
        assert_eq!(gt[0].k_vpk, 20.0);
        // every vehicle wraps exactly once per 100 s except ones wrapping at t = 300
        let q = gt[0].q_vph;
        let v_mps = q / gt[0].k_vpk / 3.6;
        assert!((v_mps - 10.0).abs() / 10.0 < 0.05, "{v_mps}");
        assert_eq!(gt[0].space_mean_speed_kmh, Some(36.0));
    }

    #[test]
    fn means_over_scope() {
        let mk = |lane: u32, k: f64, steps: usize| GroundTruthState {
            lane: LaneId(lane),
            interval_start_s: 0.0,
            k_vpk: k,
            q_vph: 2.0 * k,
            v_kmh: None,
            space_mean_speed_kmh: None,
            vehicle_steps: steps,
            entries: 0,
        };
        let states = vec![mk(0, 10.0, 5), mk(1, 30.0, 5), mk(2, 0.0, 0)];
        let m = network_means(&states, &[LaneId(0), LaneId(1), LaneId(2)], false).unwrap();
        assert_eq!(m[0].k_avg_vpk, 20.0);
        assert_eq!(m[0].q_avg_vph, 40.0);
        let all = network_means(&states, &[LaneId(0), LaneId(1), LaneId(2)], true).unwrap();
        assert!((all[0].k_avg_vpk - 40.0 / 3.0).abs() < 1e-12);
        let single = network_means(&states, &[LaneId(1)], false).unwrap();
        assert_eq!(single[0].k_avg_vpk, 30.0);
        assert!(network_means(&states, &[], false).is_err());
    }
}
