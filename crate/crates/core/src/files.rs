//! Delimited text formats exchanged between pipeline stages.
//!
//! Floats are written in their shortest round-trip form, so reading a file
//! back yields bit-identical values. Missing values are empty fields.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::clustering::ElbowPoint;
use crate::detection::ObserverKind;
use crate::estimation::{ClusterId, LaneStay, Scope, Source, TrafficState};
use crate::ground_truth::GroundTruthState;
use crate::metrics::{ErrorRecord, HistogramBin, MfdPoint, Quantity, QuantitySummary};
use crate::network::{LaneId, RoadNetwork};
use crate::trajectory::VehicleId;

pub const GROUND_TRUTH_HEADER: &str =
    "lane,ts_s,k_vpk,q_vph,v_kmh,space_mean_speed_kmh,vehicle_steps,entries";
pub const ESTIMATES_HEADER: &str = "scope_kind,scope_id,ts_s,k_vpk,v_kmh,q_vph,source,sample_count";
pub const CLUSTERS_HEADER: &str = "lane_id,cluster_id";
pub const ELBOW_HEADER: &str = "k,wcss,is_knee";
pub const ERRORS_HEADER: &str = "scope_kind,scope_id,ts_s,quantity,true,est,rel_err,zero_flag";
pub const HISTOGRAM_HEADER: &str = "scope_kind,quantity,lower,upper,count";
pub const MFD_HEADER: &str = "scope_kind,scope_id,ts_s,k_vpk,q_vph,v_kmh,source";
pub const LANE_STAYS_HEADER: &str = "observer,kind,lane,ts_s,first_time_s,steps,k_vpk,v_kmh,q_vph";

/// A problem with one row of an artifact file. `row` is 1-based and counts
/// the header.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn scope_id(scope: &Scope, network: &RoadNetwork) -> String {
    match scope {
        Scope::Lane(l) => network.lane_key(*l),
        Scope::Cluster(c) => c.0.to_string(),
        Scope::Network => "all".to_string(),
    }
}

fn parse_scope(kind: &str, id: &str, network: &RoadNetwork) -> Result<Scope, String> {
    match kind {
        "lane" => network
            .parse_lane_key(id)
            .map(Scope::Lane)
            .ok_or_else(|| format!("unknown lane `{id}`")),
        "cluster" => id
            .parse()
            .map(|c| Scope::Cluster(ClusterId(c)))
            .map_err(|_| format!("bad cluster id `{id}`")),
        "network" => Ok(Scope::Network),
        other => Err(format!("unknown scope kind `{other}`")),
    }
}

/// Rows of a comma-separated artifact after checking its header.
fn rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>, RowError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        _ => {
            return Err(RowError {
                row: 1,
                message: format!("expected header `{header}`"),
            })
        }
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != width {
            return Err(RowError {
                row: i + 1,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        out.push((i + 1, fields));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(row: usize, name: &str, s: &str) -> Result<T, RowError> {
    s.parse().map_err(|_| RowError {
        row,
        message: format!("bad {name} `{s}`"),
    })
}

fn opt_num(row: usize, name: &str, s: &str) -> Result<Option<f64>, RowError> {
    if s.is_empty() {
        Ok(None)
    } else {
        num(row, name, s).map(Some)
    }
}

pub fn write_ground_truth(states: &[GroundTruthState], network: &RoadNetwork) -> String {
    let mut out = format!("{GROUND_TRUTH_HEADER}\n");
    for s in states {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            network.lane_key(s.lane),
            s.interval_start_s,
            s.k_vpk,
            s.q_vph,
            opt(s.v_kmh),
            opt(s.space_mean_speed_kmh),
            s.vehicle_steps,
            s.entries
        )
        .unwrap();
    }
    out
}

pub fn read_ground_truth(text: &str, network: &RoadNetwork) -> Result<Vec<GroundTruthState>, RowError> {
    rows(text, GROUND_TRUTH_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            Ok(GroundTruthState {
                lane: network.parse_lane_key(f[0]).ok_or_else(|| RowError {
                    row,
                    message: format!("unknown lane `{}`", f[0]),
                })?,
                interval_start_s: num(row, "ts_s", f[1])?,
                k_vpk: num(row, "k_vpk", f[2])?,
                q_vph: num(row, "q_vph", f[3])?,
                v_kmh: opt_num(row, "v_kmh", f[4])?,
                space_mean_speed_kmh: opt_num(row, "space_mean_speed_kmh", f[5])?,
                vehicle_steps: num(row, "vehicle_steps", f[6])?,
                entries: num(row, "entries", f[7])?,
            })
        })
        .collect()
}

pub fn write_estimates(states: &[TrafficState], network: &RoadNetwork) -> String {
    let mut out = format!("{ESTIMATES_HEADER}\n");
    for s in states {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.scope.kind(),
            scope_id(&s.scope, network),
            s.interval_start_s,
            s.k_vpk,
            opt(s.v_kmh),
            opt(s.q_vph),
            s.source,
            s.sample_count
        )
        .unwrap();
    }
    out
}

pub fn read_estimates(text: &str, network: &RoadNetwork) -> Result<Vec<TrafficState>, RowError> {
    rows(text, ESTIMATES_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            Ok(TrafficState {
                scope: parse_scope(f[0], f[1], network).map_err(|message| RowError { row, message })?,
                interval_start_s: num(row, "ts_s", f[2])?,
                k_vpk: num(row, "k_vpk", f[3])?,
                v_kmh: opt_num(row, "v_kmh", f[4])?,
                q_vph: opt_num(row, "q_vph", f[5])?,
                source: Source::from_label(f[6]).ok_or_else(|| RowError {
                    row,
                    message: format!("unknown source `{}`", f[6]),
                })?,
                sample_count: num(row, "sample_count", f[7])?,
            })
        })
        .collect()
}

pub fn write_clusters(mapping: &BTreeMap<LaneId, ClusterId>, network: &RoadNetwork) -> String {
    let mut out = format!("{CLUSTERS_HEADER}\n");
    for (lane, cluster) in mapping {
        writeln!(out, "{},{}", network.lane_key(*lane), cluster.0).unwrap();
    }
    out
}

pub fn read_clusters(text: &str, network: &RoadNetwork) -> Result<BTreeMap<LaneId, ClusterId>, RowError> {
    rows(text, CLUSTERS_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            let lane = network.parse_lane_key(f[0]).ok_or_else(|| RowError {
                row,
                message: format!("unknown lane `{}`", f[0]),
            })?;
            Ok((lane, ClusterId(num(row, "cluster_id", f[1])?)))
        })
        .collect()
}

pub fn write_elbow(points: &[ElbowPoint]) -> String {
    let mut out = format!("{ELBOW_HEADER}\n");
    for p in points {
        writeln!(out, "{},{},{}", p.k, p.wcss, p.is_knee).unwrap();
    }
    out
}

pub fn write_errors(records: &[ErrorRecord], network: &RoadNetwork) -> String {
    let mut out = format!("{ERRORS_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scope.kind(),
            scope_id(&r.scope, network),
            r.interval_start_s,
            r.quantity.label(),
            r.true_value,
            r.estimated_value,
            r.relative_error,
            r.zero_fallback
        )
        .unwrap();
    }
    out
}

/// Keyed text block, one `[scope_kind.quantity]` table per summary.
pub fn write_summary(source: Source, joined: usize, by_scope: &[(&str, Vec<QuantitySummary>)]) -> String {
    let mut out = format!("source = \"{source}\"\njoined = {joined}\n");
    for (kind, summaries) in by_scope {
        for s in summaries {
            writeln!(out, "\n[{kind}.{}]", s.quantity.label()).unwrap();
            writeln!(out, "count = {}", s.count).unwrap();
            writeln!(out, "zero_fallback_count = {}", s.zero_fallback_count).unwrap();
            for (key, value) in [
                ("mean", s.mean),
                ("median", s.median),
                ("p90", s.p90),
                ("overestimated_fraction", s.overestimated_fraction),
                ("mean_signed_error", s.mean_signed_error),
            ] {
                if value.is_finite() {
                    writeln!(out, "{key} = {value}").unwrap();
                } else {
                    writeln!(out, "{key} = nan").unwrap();
                }
            }
        }
    }
    out
}

pub fn write_histogram(by_scope: &[(&str, Vec<HistogramBin>)]) -> String {
    let mut out = format!("{HISTOGRAM_HEADER}\n");
    for (kind, bins) in by_scope {
        for b in bins {
            writeln!(out, "{kind},{},{},{},{}", b.quantity.label(), b.lower, b.upper, b.count).unwrap();
        }
    }
    out
}

pub fn write_mfd(points: &[MfdPoint], network: &RoadNetwork) -> String {
    let mut out = format!("{MFD_HEADER}\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.scope.kind(),
            scope_id(&p.scope, network),
            p.interval_start_s,
            p.k_avg_vpk,
            opt(p.q_avg_vph),
            opt(p.v_avg_kmh),
            p.source
        )
        .unwrap();
    }
    out
}

pub fn write_lane_stays(stays: &[LaneStay], network: &RoadNetwork) -> String {
    let mut out = format!("{LANE_STAYS_HEADER}\n");
    for s in stays {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.observer,
            s.kind.label(),
            network.lane_key(s.lane),
            s.interval_start_s,
            s.first_time_s,
            s.steps,
            s.k_vpk,
            opt(s.v_kmh),
            opt(s.q_vph)
        )
        .unwrap();
    }
    out
}

pub fn read_lane_stays(text: &str, network: &RoadNetwork) -> Result<Vec<LaneStay>, RowError> {
    rows(text, LANE_STAYS_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            Ok(LaneStay {
                observer: VehicleId(num(row, "observer", f[0])?),
                kind: match f[1] {
                    "MO" => ObserverKind::Moving,
                    "PO" => ObserverKind::Parking,
                    other => {
                        return Err(RowError {
                            row,
                            message: format!("unknown observer kind `{other}`"),
                        })
                    }
                },
                lane: network.parse_lane_key(f[2]).ok_or_else(|| RowError {
                    row,
                    message: format!("unknown lane `{}`", f[2]),
                })?,
                interval_start_s: num(row, "ts_s", f[3])?,
                first_time_s: num(row, "first_time_s", f[4])?,
                steps: num(row, "steps", f[5])?,
                k_vpk: num(row, "k_vpk", f[6])?,
                v_kmh: opt_num(row, "v_kmh", f[7])?,
                q_vph: opt_num(row, "q_vph", f[8])?,
            })
        })
        .collect()
}

/// Summary statistics keyed by scope kind, in lane, cluster, network order.
pub fn group_by_scope_kind<T, F>(items: &[T], scope_of: F) -> Vec<(&'static str, Vec<&T>)>
where
    F: Fn(&T) -> Scope,
{
    ["lane", "cluster", "network"]
        .into_iter()
        .map(|kind| (kind, items.iter().filter(|i| scope_of(i).kind() == kind).collect::<Vec<_>>()))
        .filter(|(_, v)| !v.is_empty())
        .collect()
}

pub fn quantity_from_label(label: &str) -> Option<Quantity> {
    Quantity::ALL.into_iter().find(|q| q.label() == label)
}
