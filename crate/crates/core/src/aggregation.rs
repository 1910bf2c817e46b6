use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::trajectory::TrajectoryLog;

/// Fixed aggregation windows `[start_s + j * t_agg_s, start_s + (j+1) * t_agg_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregationConfig {
    #[serde(default = "default_t_agg")]
    pub t_agg_s: f64,
    #[serde(default)]
    pub start_s: f64,
}

fn default_t_agg() -> f64 {
    300.0
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            t_agg_s: default_t_agg(),
            start_s: 0.0,
        }
    }
}

/// One aggregation window and the log frames that fall inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub index: usize,
    pub start_s: f64,
    pub frames: Range<usize>,
}

impl AggregationConfig {
    pub fn with_t_agg(t_agg_s: f64) -> Self {
        AggregationConfig {
            t_agg_s,
            start_s: 0.0,
        }
    }

    pub fn check_step(&self, step_s: f64) -> Result<(), PolicyError> {
        let ratio = self.t_agg_s / step_s;
        if !(self.t_agg_s > 0.0) || !(step_s > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(PolicyError::Aggregation {
                t_agg_s: self.t_agg_s,
                step_s,
            });
        }
        Ok(())
    }

    fn interval_of(&self, time_s: f64) -> Option<usize> {
        let rel = (time_s - self.start_s) / self.t_agg_s;
        if rel < -1e-9 {
            return None;
        }
        Some((rel + 1e-9).floor().max(0.0) as usize)
    }

    pub fn interval_start(&self, index: usize) -> f64 {
        self.start_s + index as f64 * self.t_agg_s
    }

    /// Intervals covering the log's frames, in time order. Frames before
    /// `start_s` belong to no interval. Intervals without frames are skipped.
    pub fn intervals(&self, log: &TrajectoryLog) -> Result<Vec<Interval>, PolicyError> {
        self.check_step(log.step_s)?;
        let mut out: Vec<Interval> = Vec::new();
        for frame in 0..log.frames.len() {
            let Some(index) = self.interval_of(log.time_of(frame)) else {
                continue;
            };
            match out.last_mut() {
                Some(last) if last.index == index => last.frames.end = frame + 1,
                _ => out.push(Interval {
                    index,
                    start_s: self.interval_start(index),
                    frames: frame..frame + 1,
                }),
            }
        }
        Ok(out)
    }
}
