//! Reading trajectory logs produced by this simulator or by third parties.
//!
//! Rows are `timestep_s, vehicle_id, edge_id, lane_index, position_m,
//! speed_mps` under a required header row. An optional leading comment
//! `# step_s=<s> start_s=<s> frames=<n>` pins the frame grid; without it
//! the step is the smallest gap between distinct timestamps and the grid
//! spans the first to the last timestamp.

use std::collections::{BTreeMap, HashSet};

use crate::error::TrajectoryError;
use crate::network::{EdgeId, RoadNetwork};
use crate::trajectory::{TrajectoryLog, VehicleId, VehicleState, TRAJECTORY_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestMode {
    /// Reject the whole file on the first bad row.
    #[default]
    Strict,
    /// Drop bad rows and count them by reason.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub delimiter: u8,
    pub mode: IngestMode,
    /// Length assigned to every vehicle; the row format does not carry it.
    pub vehicle_length_m: f64,
    pub check_overlap: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            delimiter: b',',
            mode: IngestMode::Strict,
            vehicle_length_m: 5.0,
            check_overlap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub log: TrajectoryLog,
    pub rows_read: usize,
    /// Dropped row counts keyed by reason (lenient mode only).
    pub dropped: BTreeMap<&'static str, usize>,
}

impl IngestReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

struct Grid {
    step_s: f64,
    start_s: f64,
    frames: Option<usize>,
}

fn parse_metadata(line: &str) -> Option<Grid> {
    let body = line.trim_start().strip_prefix('#')?;
    let mut step = None;
    let mut start = None;
    let mut frames = None;
    for token in body.split_whitespace() {
        let (key, value) = token.split_once('=')?;
        match key {
            "step_s" => step = value.parse::<f64>().ok(),
            "start_s" => start = value.parse::<f64>().ok(),
            "frames" => frames = value.parse::<usize>().ok(),
            _ => {}
        }
    }
    Some(Grid {
        step_s: step.filter(|s| *s > 0.0)?,
        start_s: start?,
        frames,
    })
}

/// Parses with default options (comma, strict).
pub fn parse_trajectory(text: &str, network: &RoadNetwork) -> Result<TrajectoryLog, TrajectoryError> {
    parse_trajectory_with(text, network, &IngestOptions::default()).map(|r| r.log)
}

pub fn parse_trajectory_with(
    text: &str,
    network: &RoadNetwork,
    options: &IngestOptions,
) -> Result<IngestReport, TrajectoryError> {
    let grid_hint = text
        .lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .find_map(parse_metadata);

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|_| TrajectoryError::MissingHeader)?;
    if header.len() != TRAJECTORY_HEADER.len() || header.iter().zip(TRAJECTORY_HEADER).any(|(a, b)| a != b) {
        return Err(TrajectoryError::MissingHeader);
    }

    let strict = options.mode == IngestMode::Strict;
    let mut dropped: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut reject = |err: TrajectoryError, reason: &'static str| -> Result<(), TrajectoryError> {
        if strict {
            Err(err)
        } else {
            *dropped.entry(reason).or_default() += 1;
            Ok(())
        }
    };

    let mut rows: Vec<(usize, f64, VehicleState)> = Vec::new();
    let mut rows_read = 0;
    for record in reader.records() {
        rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line() as usize);
                reject(
                    TrajectoryError::Malformed {
                        row,
                        message: e.to_string(),
                    },
                    "malformed",
                )?;
                continue;
            }
        };
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != TRAJECTORY_HEADER.len() {
            reject(
                TrajectoryError::Malformed {
                    row,
                    message: format!("expected {} fields, found {}", TRAJECTORY_HEADER.len(), record.len()),
                },
                "malformed",
            )?;
            continue;
        }
        let parsed = (|| {
            Some((
                record[0].parse::<f64>().ok().filter(|t| t.is_finite())?,
                record[1].parse::<u64>().ok()?,
                record[2].parse::<u32>().ok()?,
                record[3].parse::<usize>().ok()?,
                record[4].parse::<f64>().ok().filter(|x| x.is_finite())?,
                record[5].parse::<f64>().ok().filter(|x| x.is_finite())?,
            ))
        })();
        let Some((t, vehicle, edge, lane_index, position, speed)) = parsed else {
            reject(
                TrajectoryError::Malformed {
                    row,
                    message: "unparseable field".into(),
                },
                "malformed",
            )?;
            continue;
        };
        let Some(lane) = network.lane_on(EdgeId(edge), lane_index) else {
            reject(
                TrajectoryError::UnknownLane {
                    row,
                    edge,
                    lane_index,
                },
                "unknown_lane",
            )?;
            continue;
        };
        let length = network.lane(lane).length_m;
        if !(0.0..=length).contains(&position) {
            reject(
                TrajectoryError::Invariant {
                    row,
                    message: format!("position {position} outside lane [0, {length}]"),
                },
                "position",
            )?;
            continue;
        }
        if speed < 0.0 {
            reject(
                TrajectoryError::Invariant {
                    row,
                    message: format!("negative speed {speed}"),
                },
                "speed",
            )?;
            continue;
        }
        rows.push((
            row,
            t,
            VehicleState {
                vehicle: VehicleId(vehicle),
                lane,
                position_m: position,
                speed_mps: speed,
                length_m: options.vehicle_length_m,
            },
        ));
    }

    let grid = match grid_hint {
        Some(g) => g,
        None => infer_grid(&rows),
    };
    let mut frames: Vec<Vec<(usize, VehicleState)>> = Vec::new();
    if let Some(n) = grid.frames {
        frames.resize_with(n, Vec::new);
    }
    for (row, t, state) in rows {
        let pos = (t - grid.start_s) / grid.step_s;
        let index = pos.round();
        if index < 0.0 || (pos - index).abs() > 1e-6 || grid.frames.is_some_and(|n| index as usize >= n) {
            return Err(TrajectoryError::NonConstantStep { row, time_s: t });
        }
        let index = index as usize;
        if index >= frames.len() {
            frames.resize_with(index + 1, Vec::new);
        }
        frames[index].push((row, state));
    }

    let mut out_frames = Vec::with_capacity(frames.len());
    for (i, mut frame) in frames.into_iter().enumerate() {
        frame.sort_by_key(|(row, s)| (s.vehicle, *row));
        let mut seen = HashSet::new();
        let mut kept: Vec<(usize, VehicleState)> = Vec::with_capacity(frame.len());
        for (row, state) in frame {
            if !seen.insert(state.vehicle) {
                reject(
                    TrajectoryError::Duplicate {
                        row,
                        vehicle: state.vehicle.0,
                        time_s: grid.start_s + i as f64 * grid.step_s,
                    },
                    "duplicate",
                )?;
                continue;
            }
            kept.push((row, state));
        }
        if options.check_overlap {
            kept = drop_overlaps(kept, &mut reject)?;
        }
        out_frames.push(kept.into_iter().map(|(_, s)| s).collect());
    }

    Ok(IngestReport {
        log: TrajectoryLog::new(grid.start_s, grid.step_s, out_frames),
        rows_read,
        dropped,
    })
}

fn infer_grid(rows: &[(usize, f64, VehicleState)]) -> Grid {
    let mut times: Vec<f64> = rows.iter().map(|r| r.1).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let step = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Grid {
        step_s: if step.is_finite() { step } else { 1.0 },
        start_s: times.first().copied().unwrap_or(0.0),
        frames: None,
    }
}

fn drop_overlaps<F>(
    frame: Vec<(usize, VehicleState)>,
    reject: &mut F,
) -> Result<Vec<(usize, VehicleState)>, TrajectoryError>
where
    F: FnMut(TrajectoryError, &'static str) -> Result<(), TrajectoryError>,
{
    let mut order: Vec<usize> = (0..frame.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&frame[a].1, &frame[b].1);
        sa.lane
            .cmp(&sb.lane)
            .then(sb.position_m.total_cmp(&sa.position_m))
            .then(sa.vehicle.cmp(&sb.vehicle))
    });
    let mut bad = vec![false; frame.len()];
    let mut leader: Option<usize> = None;
    for &i in &order {
        let s = &frame[i].1;
        if let Some(l) = leader {
            let lead = &frame[l].1;
            if lead.lane == s.lane && s.position_m > lead.rear_m() + 1e-9 {
                reject(
                    TrajectoryError::Invariant {
                        row: frame[i].0,
                        message: format!(
                            "vehicle {} overlaps vehicle {} on its lane",
                            s.vehicle, lead.vehicle
                        ),
                    },
                    "overlap",
                )?;
                bad[i] = true;
                continue;
            }
        }
        leader = Some(i);
    }
    Ok(frame
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !bad[*i])
        .map(|(_, r)| r)
        .collect())
}
