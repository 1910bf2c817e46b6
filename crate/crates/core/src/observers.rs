//! Per-interval sampling of moving and parking observers.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationConfig;
use crate::error::PolicyError;
use crate::network::LaneId;
use crate::trajectory::{TrajectoryLog, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverPolicy {
    pub penetration_pct: f64,
    /// Share of sampled observers acting as moving observers.
    #[serde(default = "half")]
    pub mo_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub min_per_interval: usize,
}

fn half() -> f64 {
    0.5
}

fn one() -> usize {
    1
}

impl ObserverPolicy {
    pub fn new(penetration_pct: f64, mo_fraction: f64, seed: u64) -> Self {
        ObserverPolicy {
            penetration_pct,
            mo_fraction,
            seed,
            min_per_interval: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.penetration_pct > 0.0 && self.penetration_pct <= 100.0) {
            return Err(PolicyError::Penetration(self.penetration_pct));
        }
        if !(0.0..=1.0).contains(&self.mo_fraction) {
            return Err(PolicyError::Split(self.mo_fraction));
        }
        Ok(())
    }

    /// `(n_mo, n_po)` for an interval with `n_total` distinct vehicles.
    pub fn observer_counts(&self, n_total: usize) -> (usize, usize) {
        if n_total == 0 {
            return (0, 0);
        }
        let n_obs = round_half_up(n_total as f64 * self.penetration_pct / 100.0)
            .max(self.min_per_interval)
            .min(n_total);
        let mut n_mo = round_half_up(n_obs as f64 * self.mo_fraction).min(n_obs);
        if n_obs >= 2 {
            if self.mo_fraction > 0.0 && n_mo == 0 {
                n_mo = 1;
            }
            if self.mo_fraction < 1.0 && n_mo == n_obs {
                n_mo = n_obs - 1;
            }
        }
        (n_mo, n_obs - n_mo)
    }
}

/// Rounds `x >= 0` to the nearest integer with halves going up. A relative
/// slack of 1e-9 absorbs representation error in products like `n * p / 100`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9 * x.abs().max(1.0)).floor().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParkingAnchor {
    pub vehicle: VehicleId,
    pub lane: LaneId,
    pub position_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverAssignment {
    pub interval_start_s: f64,
    pub n_total: usize,
    /// Sorted.
    pub mo_ids: Vec<VehicleId>,
    pub po_anchors: Vec<ParkingAnchor>,
}

/// Draws observers for every interval of the log. Each interval uses its
/// own random stream derived from the policy seed, so intervals are
/// independent of each other and of processing order.
pub fn sample_observers(
    log: &TrajectoryLog,
    agg: &AggregationConfig,
    policy: &ObserverPolicy,
) -> Result<Vec<ObserverAssignment>, PolicyError> {
    policy.validate()?;
    let intervals = agg.intervals(log)?;
    let mut out = Vec::with_capacity(intervals.len());
    for interval in intervals {
        let present: Vec<VehicleId> = log.frames[interval.frames.clone()]
            .iter()
            .flatten()
            .map(|v| v.vehicle)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n_total = present.len();
        let (n_mo, n_po) = policy.observer_counts(n_total);
        let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
        rng.set_stream(interval.index as u64);
        let picked = rand::seq::index::sample(&mut rng, n_total, n_mo + n_po).into_vec();

        let mut mo_ids: Vec<VehicleId> = picked[..n_mo].iter().map(|&i| present[i]).collect();
        mo_ids.sort();
        let mut po_ids: Vec<VehicleId> = picked[n_mo..].iter().map(|&i| present[i]).collect();
        po_ids.sort();
        let po_anchors = po_ids
            .into_iter()
            .map(|id| {
                let first = log.frames[interval.frames.clone()]
                    .iter()
                    .find_map(|frame| frame.binary_search_by_key(&id, |v| v.vehicle).ok().map(|i| frame[i]))
                    .expect("sampled vehicle is present in the interval");
                ParkingAnchor {
                    vehicle: id,
                    lane: first.lane,
                    position_m: first.position_m,
                }
            })
            .collect();
        out.push(ObserverAssignment {
            interval_start_s: interval.start_s,
            n_total,
            mo_ids,
            po_anchors,
        });
    }
    Ok(out)
}
