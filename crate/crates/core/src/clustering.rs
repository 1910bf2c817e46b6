//! Grouping lanes by their average traffic behavior.
//!
//! Features are z-standardized per dimension before clustering. K-means
//! uses Lloyd iterations with greedy farthest-point growth: start from one
//! lane picked by the seed, and to go from `j` to `j + 1` clusters add the
//! lane farthest from its current centroid, then iterate again. The
//! `k`-cluster model therefore refines the `k - 1` model, which makes the
//! within-cluster sum of squares nonincreasing in `k`.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ClusterError;
use crate::estimation::{ClusterId, TrafficState};
use crate::ground_truth::GroundTruthState;
use crate::network::LaneId;

#[derive(Debug, Clone, PartialEq)]
pub struct LaneFeature {
    pub lane: LaneId,
    pub mean_k: f64,
    pub mean_v: f64,
    pub mean_q: f64,
    /// z-scores of (k, v, q) over the corpus of included lanes.
    pub z: [f64; 3],
}

/// Which feature columns feed the clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSelection {
    pub include_q: bool,
}

impl Default for FeatureSelection {
    fn default() -> Self {
        FeatureSelection { include_q: false }
    }
}

impl FeatureSelection {
    fn point(&self, f: &LaneFeature) -> Vec<f64> {
        if self.include_q {
            f.z.to_vec()
        } else {
            f.z[..2].to_vec()
        }
    }
}

/// Builds features from per-lane means and standardizes them. Zero variance
/// dimensions standardize to 0.
pub fn standardize(raw: Vec<(LaneId, [f64; 3])>) -> Vec<LaneFeature> {
    let n = raw.len() as f64;
    let mut mean = [0.0; 3];
    for (_, x) in &raw {
        for d in 0..3 {
            mean[d] += x[d] / n;
        }
    }
    let mut sd = [0.0; 3];
    for (_, x) in &raw {
        for d in 0..3 {
            sd[d] += (x[d] - mean[d]).powi(2) / n;
        }
    }
    let sd = sd.map(f64::sqrt);
    raw.into_iter()
        .map(|(lane, x)| {
            let mut z = [0.0; 3];
            for d in 0..3 {
                z[d] = if sd[d] > 1e-12 { (x[d] - mean[d]) / sd[d] } else { 0.0 };
            }
            LaneFeature {
                lane,
                mean_k: x[0],
                mean_v: x[1],
                mean_q: x[2],
                z,
            }
        })
        .collect()
}

/// Per-lane means of `k`, `v` and `q` over the intervals in which the lane
/// held a vehicle. Lanes never occupied are left out.
pub fn lane_features(gt: &[GroundTruthState]) -> Result<Vec<LaneFeature>, ClusterError> {
    let mut acc: BTreeMap<LaneId, ([f64; 3], usize)> = BTreeMap::new();
    for s in gt.iter().filter(|s| s.observed()) {
        let e = acc.entry(s.lane).or_insert(([0.0; 3], 0));
        e.0[0] += s.k_vpk;
        e.0[1] += s.v_kmh.unwrap_or(0.0);
        e.0[2] += s.q_vph;
        e.1 += 1;
    }
    if acc.is_empty() {
        return Err(ClusterError::NoLanes);
    }
    Ok(standardize(
        acc.into_iter()
            .map(|(lane, (sum, n))| (lane, sum.map(|x| x / n as f64)))
            .collect(),
    ))
}

/// Same as [`lane_features`] but from lane-scope estimates of one source.
pub fn lane_features_from_estimates(states: &[TrafficState]) -> Result<Vec<LaneFeature>, ClusterError> {
    let mut acc: BTreeMap<LaneId, ([f64; 3], [usize; 3])> = BTreeMap::new();
    for s in states {
        let crate::estimation::Scope::Lane(lane) = s.scope else {
            continue;
        };
        let e = acc.entry(lane).or_insert(([0.0; 3], [0; 3]));
        e.0[0] += s.k_vpk;
        e.1[0] += 1;
        if let Some(v) = s.v_kmh {
            e.0[1] += v;
            e.1[1] += 1;
        }
        if let Some(q) = s.q_vph {
            e.0[2] += q;
            e.1[2] += 1;
        }
    }
    if acc.is_empty() {
        return Err(ClusterError::NoLanes);
    }
    Ok(standardize(
        acc.into_iter()
            .map(|(lane, (sum, n))| {
                let mut m = [0.0; 3];
                for d in 0..3 {
                    m[d] = if n[d] > 0 { sum[d] / n[d] as f64 } else { 0.0 };
                }
                (lane, m)
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub features: FeatureSelection,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
            features: FeatureSelection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// In standardized feature space.
    pub centroids: Vec<Vec<f64>>,
    pub assignment: BTreeMap<LaneId, ClusterId>,
    pub wcss: f64,
    pub seed: u64,
    /// Lloyd iterations spent on the final cluster count.
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

struct Lloyd<'a> {
    points: &'a [Vec<f64>],
    centroids: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Lloyd<'_> {
    fn farthest_point(&self) -> usize {
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, p) in self.points.iter().enumerate() {
            let d = sq_dist(p, &self.centroids[self.labels[i]]);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn assign(&mut self) {
        for (i, p) in self.points.iter().enumerate() {
            self.labels[i] = nearest(p, &self.centroids);
        }
    }

    /// Lloyd iterations until centroids move less than `tol`.
    fn run(&mut self, max_iter: usize, tol: f64) -> usize {
        let dims = self.points[0].len();
        let k = self.centroids.len();
        let mut iterations = 0;
        for _ in 0..max_iter {
            iterations += 1;
            self.assign();
            // an empty cluster takes over the point farthest from its centroid
            for c in 0..k {
                if !self.labels.contains(&c) {
                    let far = self.farthest_point();
                    self.centroids[c] = self.points[far].clone();
                    self.labels[far] = c;
                }
            }
            let mut sums = vec![vec![0.0; dims]; k];
            let mut counts = vec![0usize; k];
            for (p, &l) in self.points.iter().zip(&self.labels) {
                counts[l] += 1;
                for d in 0..dims {
                    sums[l][d] += p[d];
                }
            }
            let mut shift: f64 = 0.0;
            for c in 0..k {
                let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                shift = shift.max(sq_dist(&mean, &self.centroids[c]).sqrt());
                self.centroids[c] = mean;
            }
            if shift < tol {
                break;
            }
        }
        iterations
    }

    fn wcss(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.labels)
            .map(|(p, &l)| sq_dist(p, &self.centroids[l]))
            .sum()
    }
}

/// Runs the nested farthest-point chain up to `k_max` clusters and returns
/// the model for every `k` in `1..=k_max`.
fn kmeans_chain(
    features: &[LaneFeature],
    k_max: usize,
    opts: &KMeansOptions,
) -> Result<Vec<ClusterModel>, ClusterError> {
    if k_max == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if features.is_empty() {
        return Err(ClusterError::NoLanes);
    }
    if k_max > features.len() {
        return Err(ClusterError::TooManyClusters {
            k: k_max,
            lanes: features.len(),
        });
    }
    // canonical lane order makes the result independent of input order
    let mut order: Vec<&LaneFeature> = features.iter().collect();
    order.sort_by_key(|f| f.lane);
    let points: Vec<Vec<f64>> = order.iter().map(|f| opts.features.point(f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = rng.random_range(0..points.len());
    let mut lloyd = Lloyd {
        points: &points,
        centroids: vec![points[start].clone()],
        labels: vec![0; points.len()],
    };
    let mut models = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        if k > 1 {
            let far = lloyd.farthest_point();
            lloyd.centroids.push(points[far].clone());
        }
        let iterations = lloyd.run(opts.max_iter, opts.tol);
        models.push(ClusterModel {
            k,
            centroids: lloyd.centroids.clone(),
            assignment: order
                .iter()
                .zip(&lloyd.labels)
                .map(|(f, &l)| (f.lane, ClusterId(l as u32)))
                .collect(),
            wcss: lloyd.wcss(),
            seed: opts.seed,
            iterations,
        });
    }
    Ok(models)
}

pub fn kmeans(features: &[LaneFeature], k: usize, opts: &KMeansOptions) -> Result<ClusterModel, ClusterError> {
    Ok(kmeans_chain(features, k, opts)?.pop().expect("k >= 1"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElbowPoint {
    pub k: usize,
    pub wcss: f64,
    pub is_knee: bool,
}

/// WCSS for each `k` in `k_range`. The knee is the interior `k` with the
/// largest second difference `wcss(k-1) - 2 wcss(k) + wcss(k+1)`; it needs
/// at least three consecutive values.
pub fn elbow_curve(
    features: &[LaneFeature],
    k_range: std::ops::RangeInclusive<usize>,
    opts: &KMeansOptions,
) -> Result<Vec<ElbowPoint>, ClusterError> {
    if k_range.is_empty() {
        return Err(ClusterError::EmptyRange);
    }
    if *k_range.start() == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    let models = kmeans_chain(features, *k_range.end(), opts)?;
    let mut points: Vec<ElbowPoint> = models
        .iter()
        .filter(|m| k_range.contains(&m.k))
        .map(|m| ElbowPoint {
            k: m.k,
            wcss: m.wcss,
            is_knee: false,
        })
        .collect();
    if let Some(i) = knee_index(&points) {
        points[i].is_knee = true;
    }
    Ok(points)
}

fn knee_index(points: &[ElbowPoint]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 1..points.len().saturating_sub(1) {
        let d2 = points[i - 1].wcss - 2.0 * points[i].wcss + points[i + 1].wcss;
        if best.is_none_or(|(_, b)| d2 > b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i)
}

pub fn knee(points: &[ElbowPoint]) -> Option<usize> {
    points.iter().find(|p| p.is_knee).map(|p| p.k)
}
