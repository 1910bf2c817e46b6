//! Browser bindings for three interactive views: a ring-road MFD with
//! observer estimates, a detection-zone explorer and an elbow curve.
//! Every function returns a JSON string for the page to plot.

use std::collections::BTreeMap;

use avaas_core::aggregation::AggregationConfig;
use avaas_core::clustering::{elbow_curve, standardize, FeatureSelection, KMeansOptions};
use avaas_core::detection::{
    default_sensor_profile, detect, ObserverKind, ObserverPose, SensorConfig, SensorProfile, WorldSnapshot,
};
use avaas_core::estimation::{estimate_log, point_estimate, scope_rollup, RollupTarget, Source};
use avaas_core::ground_truth::ground_truth;
use avaas_core::network::{builtin_network, Builtin, LaneId};
use avaas_core::observers::ObserverPolicy;
use avaas_core::sim::{simulate, DemandSpec, Placement};
use avaas_core::trajectory::{VehicleId, VehicleState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_js<T: Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct MfdRow {
    vehicles: usize,
    gt_k: f64,
    gt_q: f64,
    gt_v: Option<f64>,
    est_k: Option<f64>,
    est_q: Option<f64>,
    est_v: Option<f64>,
}

/// Simulates a 1 km ring at increasing vehicle counts and returns the
/// time-averaged ground truth next to the observer estimate for each.
#[wasm_bindgen]
pub fn ring_mfd(penetration_pct: f64, max_vehicles: usize, seed: u64) -> Result<String, JsValue> {
    let net = builtin_network(Builtin::ring(1000.0, 1)).map_err(err)?;
    let agg = AggregationConfig::with_t_agg(300.0);
    let policy = ObserverPolicy::new(penetration_pct, 0.5, seed);
    policy.validate().map_err(err)?;
    let sensors = SensorConfig {
        cross_edge: true,
        ..default_sensor_profile(SensorProfile::LongRange)
    };
    let mut rows = Vec::new();
    let top = max_vehicles.clamp(10, 180);
    for n in (10..=top).step_by(10) {
        let demand = DemandSpec {
            placements: vec![Placement {
                edge: 0,
                lane_index: None,
                count: n,
                offset_m: 0.0,
                speed_mps: 0.0,
            }],
            flows: vec![],
        };
        let run = simulate(&net, &demand, 900.0, 1.0, seed).map_err(err)?;
        let gt = ground_truth(&run.log, &net, &agg).map_err(err)?;
        // the first interval is the start-up transient
        let settled: Vec<_> = gt.iter().filter(|s| s.interval_start_s > 0.0).collect();
        let mean = |f: &dyn Fn(&&avaas_core::ground_truth::GroundTruthState) -> f64| {
            settled.iter().map(f).sum::<f64>() / settled.len() as f64
        };
        let est = estimate_log(&run.log, &net, &agg, &policy, &sensors, 1).map_err(err)?;
        let net_states = scope_rollup(&est.states, &BTreeMap::new(), RollupTarget::Network).map_err(err)?;
        let combined: Vec<_> = net_states
            .iter()
            .filter(|s| s.source == Source::Combined && s.interval_start_s > 0.0)
            .collect();
        let avg = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        rows.push(MfdRow {
            vehicles: n,
            gt_k: mean(&|s| s.k_vpk),
            gt_q: mean(&|s| s.q_vph),
            gt_v: avg(settled.iter().filter_map(|s| s.v_kmh).collect()),
            est_k: avg(combined.iter().map(|s| s.k_vpk).collect()),
            est_q: avg(combined.iter().filter_map(|s| s.q_vph).collect()),
            est_v: avg(combined.iter().filter_map(|s| s.v_kmh).collect()),
        });
    }
    to_js(&rows)
}

#[derive(Serialize)]
struct ZoneSample {
    offset_m: f64,
    mo_k: f64,
    po_k: f64,
}

#[derive(Serialize)]
struct ZoneReport {
    true_k: f64,
    zone_length_m: f64,
    samples: Vec<ZoneSample>,
}

/// Moves an observer across one vehicle spacing on a uniformly filled ring
/// and reports the moving and parked density estimates at each offset.
#[wasm_bindgen]
pub fn detection_zone(spacing_m: f64, forward_m: f64, backward_m: f64) -> Result<String, JsValue> {
    if !(spacing_m >= 6.0 && spacing_m <= 500.0) {
        return Err(JsValue::from_str("spacing must lie in [6, 500] m"));
    }
    let ring_m = (2000.0 / spacing_m).ceil() * spacing_m;
    let net = builtin_network(Builtin::ring(ring_m, 1)).map_err(err)?;
    let sensors = SensorConfig {
        cross_edge: true,
        ..SensorConfig::ego_only(forward_m, backward_m)
    };
    sensors.validate().map_err(err)?;
    let n = (ring_m / spacing_m).round() as u64;
    let mut samples = Vec::new();
    for step in 0..=50 {
        let offset = spacing_m * step as f64 / 50.0;
        let vehicles: Vec<VehicleState> = (0..n)
            .map(|i| VehicleState {
                vehicle: VehicleId(i),
                lane: LaneId(0),
                position_m: (i as f64 * spacing_m + offset).rem_euclid(ring_m),
                speed_mps: 10.0,
                length_m: 5.0,
            })
            .collect();
        let snap = WorldSnapshot::new(0.0, &vehicles, &net);
        let ego = vehicles[0];
        let mo = ObserverPose {
            observer_id: ego.vehicle,
            kind: ObserverKind::Moving,
            lane: ego.lane,
            position_m: ego.position_m,
            speed_mps: ego.speed_mps,
            vehicle: Some(ego.vehicle),
        };
        // the parked sensor stays at the ring origin while traffic moves past
        let po = ObserverPose {
            kind: ObserverKind::Parking,
            position_m: 0.0,
            speed_mps: 0.0,
            vehicle: None,
            ..mo
        };
        let mo_obs = detect(&mo, &snap, &sensors, &net).map_err(err)?;
        let po_obs = detect(&po, &snap, &sensors, &net).map_err(err)?;
        samples.push(ZoneSample {
            offset_m: offset,
            mo_k: point_estimate(&mo_obs).map_err(err)?.k_vpk,
            po_k: point_estimate(&po_obs).map_err(err)?.k_vpk,
        });
    }
    to_js(&ZoneReport {
        true_k: 1000.0 / spacing_m,
        zone_length_m: forward_m + backward_m,
        samples,
    })
}

#[derive(Serialize)]
struct ElbowRow {
    k: usize,
    wcss: f64,
    is_knee: bool,
}

/// Elbow curve for `blobs` Gaussian clusters of 60 lanes each, centers on a
/// circle of radius `separation` (in noise standard deviations).
#[wasm_bindgen]
pub fn elbow(blobs: usize, separation: f64, seed: u64) -> Result<String, JsValue> {
    let blobs = blobs.clamp(1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut raw = Vec::new();
    for b in 0..blobs {
        let angle = std::f64::consts::TAU * b as f64 / blobs as f64;
        for _ in 0..60 {
            let id = LaneId(raw.len() as u32);
            raw.push((
                id,
                [
                    50.0 + separation * angle.cos() + gauss(),
                    50.0 + separation * angle.sin() + gauss(),
                    0.0,
                ],
            ));
        }
    }
    let features = standardize(raw);
    let opts = KMeansOptions {
        seed,
        features: FeatureSelection { include_q: false },
        ..KMeansOptions::default()
    };
    let curve = elbow_curve(&features, 1..=10, &opts).map_err(err)?;
    let rows: Vec<ElbowRow> = curve
        .iter()
        .map(|p| ElbowRow {
            k: p.k,
            wcss: p.wcss,
            is_knee: p.is_knee,
        })
        .collect();
    to_js(&rows)
}
