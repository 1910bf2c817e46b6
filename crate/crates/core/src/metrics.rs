//! Estimation quality: relative errors, paired comparisons and MFD series.

use std::collections::BTreeMap;

use crate::estimation::{LaneStay, Scope, Source, TrafficState};
use crate::ground_truth::GroundTruthState;
use crate::network::LaneId;

/// Width of the relative-error histogram bins.
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    pub value: f64,
    /// The true value was zero; `value` is the absolute error `|est|`.
    pub zero_fallback: bool,
}

pub fn relative_error(true_value: f64, estimated_value: f64) -> RelativeError {
    if true_value == 0.0 {
        RelativeError {
            value: estimated_value.abs(),
            zero_fallback: true,
        }
    } else {
        RelativeError {
            value: (true_value - estimated_value).abs() / true_value.abs(),
            zero_fallback: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    K,
    V,
    Q,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::K, Quantity::V, Quantity::Q];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::K => "k",
            Quantity::V => "v",
            Quantity::Q => "q",
        }
    }

    fn of(self, s: &TrafficState) -> Option<f64> {
        match self {
            Quantity::K => Some(s.k_vpk),
            Quantity::V => s.v_kmh,
            Quantity::Q => s.q_vph,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub scope: Scope,
    pub interval_start_s: f64,
    pub quantity: Quantity,
    pub true_value: f64,
    pub estimated_value: f64,
    pub relative_error: f64,
    pub zero_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantitySummary {
    pub quantity: Quantity,
    /// Records with a nonzero true value; the statistics use only these.
    pub count: usize,
    pub zero_fallback_count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    /// Share of records where the estimate exceeds the truth, ties counting
    /// one half.
    pub overestimated_fraction: f64,
    pub mean_signed_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub records: Vec<ErrorRecord>,
    pub summaries: Vec<QuantitySummary>,
    pub joined: usize,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Inner join of `truth` and `estimate` on (scope, interval start), one
/// record per quantity present on both sides. No interpolation fills gaps.
pub fn compare(truth: &[TrafficState], estimate: &[TrafficState]) -> ComparisonReport {
    let index: BTreeMap<(Scope, u64), &TrafficState> = truth
        .iter()
        .map(|s| ((s.scope, s.interval_start_s.to_bits()), s))
        .collect();
    let mut pairs: Vec<(&TrafficState, &TrafficState)> = estimate
        .iter()
        .filter_map(|e| index.get(&(e.scope, e.interval_start_s.to_bits())).map(|t| (*t, e)))
        .collect();
    pairs.sort_by(|a, b| {
        a.1.interval_start_s
            .total_cmp(&b.1.interval_start_s)
            .then(a.1.scope.cmp(&b.1.scope))
    });

    let mut records = Vec::with_capacity(pairs.len() * 3);
    for (t, e) in &pairs {
        for quantity in Quantity::ALL {
            let (Some(tv), Some(ev)) = (quantity.of(t), quantity.of(e)) else {
                continue;
            };
            let err = relative_error(tv, ev);
            records.push(ErrorRecord {
                scope: e.scope,
                interval_start_s: e.interval_start_s,
                quantity,
                true_value: tv,
                estimated_value: ev,
                relative_error: err.value,
                zero_fallback: err.zero_fallback,
            });
        }
    }
    let summaries = summarize(&records);
    ComparisonReport {
        records,
        summaries,
        joined: pairs.len(),
    }
}

pub fn summarize(records: &[ErrorRecord]) -> Vec<QuantitySummary> {
    let mut out = Vec::new();
    for quantity in Quantity::ALL {
        let all: Vec<&ErrorRecord> = records.iter().filter(|r| r.quantity == quantity).collect();
        if all.is_empty() {
            continue;
        }
        let rel: Vec<&ErrorRecord> = all.iter().copied().filter(|r| !r.zero_fallback).collect();
        let mut errs: Vec<f64> = rel.iter().map(|r| r.relative_error).collect();
        errs.sort_by(f64::total_cmp);
        let over: f64 = all
            .iter()
            .map(|r| {
                if r.estimated_value > r.true_value {
                    1.0
                } else if r.estimated_value == r.true_value {
                    0.5
                } else {
                    0.0
                }
            })
            .sum();
        out.push(QuantitySummary {
            quantity,
            count: rel.len(),
            zero_fallback_count: all.len() - rel.len(),
            mean: errs.iter().sum::<f64>() / errs.len() as f64,
            median: quantile(&errs, 0.5),
            p90: quantile(&errs, 0.9),
            overestimated_fraction: over / all.len() as f64,
            mean_signed_error: all.iter().map(|r| r.estimated_value - r.true_value).sum::<f64>()
                / all.len() as f64,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub quantity: Quantity,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Fixed-width histogram of relative errors per quantity; zero-fallback
/// records are left out.
pub fn error_histogram(records: &[ErrorRecord]) -> Vec<HistogramBin> {
    let mut counts: BTreeMap<(Quantity, usize), usize> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.zero_fallback) {
        let bin = (r.relative_error / HISTOGRAM_BIN_WIDTH).floor() as usize;
        *counts.entry((r.quantity, bin)).or_default() += 1;
    }
    let mut out = Vec::new();
    for quantity in Quantity::ALL {
        let Some(max_bin) = counts.keys().filter(|(q, _)| *q == quantity).map(|(_, b)| *b).max() else {
            continue;
        };
        for bin in 0..=max_bin {
            out.push(HistogramBin {
                quantity,
                lower: bin as f64 * HISTOGRAM_BIN_WIDTH,
                upper: (bin + 1) as f64 * HISTOGRAM_BIN_WIDTH,
                count: counts.get(&(quantity, bin)).copied().unwrap_or(0),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfdPoint {
    pub scope: Scope,
    pub interval_start_s: f64,
    pub k_avg_vpk: f64,
    pub q_avg_vph: Option<f64>,
    pub v_avg_kmh: Option<f64>,
    pub source: Source,
}

/// Scope filter for [`mfd_series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScopeFilter {
    Any,
    Lanes,
    Clusters,
    Network,
    Exactly(Scope),
}

impl ScopeFilter {
    fn accepts(&self, scope: &Scope) -> bool {
        match self {
            ScopeFilter::Any => true,
            ScopeFilter::Lanes => matches!(scope, Scope::Lane(_)),
            ScopeFilter::Clusters => matches!(scope, Scope::Cluster(_)),
            ScopeFilter::Network => matches!(scope, Scope::Network),
            ScopeFilter::Exactly(s) => s == scope,
        }
    }
}

/// One point per (scope, interval, source), ordered by scope, source and
/// then interval start.
pub fn mfd_series(states: &[TrafficState], filter: ScopeFilter) -> Vec<MfdPoint> {
    let mut points: BTreeMap<(Scope, Source, u64), MfdPoint> = BTreeMap::new();
    for s in states.iter().filter(|s| filter.accepts(&s.scope)) {
        points.insert(
            (s.scope, s.source, s.interval_start_s.to_bits()),
            MfdPoint {
                scope: s.scope,
                interval_start_s: s.interval_start_s,
                k_avg_vpk: s.k_vpk,
                q_avg_vph: s.q_vph,
                v_avg_kmh: s.v_kmh,
                source: s.source,
            },
        );
    }
    points.into_values().collect()
}

/// Per-stay records: each observer's mean over one contiguous stay on a
/// lane against that lane's ground truth for the interval.
pub fn lane_stay_records(stays: &[LaneStay], gt: &[GroundTruthState]) -> Vec<ErrorRecord> {
    let index: BTreeMap<(LaneId, u64), &GroundTruthState> = gt
        .iter()
        .filter(|s| s.observed())
        .map(|s| ((s.lane, s.interval_start_s.to_bits()), s))
        .collect();
    let mut out = Vec::new();
    for stay in stays {
        let Some(truth) = index.get(&(stay.lane, stay.interval_start_s.to_bits())) else {
            continue;
        };
        let t = truth.to_traffic_state();
        let e = TrafficState {
            k_vpk: stay.k_vpk,
            v_kmh: stay.v_kmh,
            q_vph: stay.q_vph,
            ..t
        };
        for quantity in Quantity::ALL {
            let (Some(tv), Some(ev)) = (quantity.of(&t), quantity.of(&e)) else {
                continue;
            };
            let err = relative_error(tv, ev);
            out.push(ErrorRecord {
                scope: Scope::Lane(stay.lane),
                interval_start_s: stay.interval_start_s,
                quantity,
                true_value: tv,
                estimated_value: ev,
                relative_error: err.value,
                zero_fallback: err.zero_fallback,
            });
        }
    }
    out
}
