//! Few-step generation by iterating the learned transport over a time grid.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::netcore::{NetInput, TimeQuery, TransportNet};
use crate::synthdata::PointBatch;
use crate::timepath::TimePair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// `N + 1` equally spaced points on `[0, 1]` with exact endpoints.
    pub fn uniform(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(invalid("a time grid needs at least one interval"));
        }
        let n = intervals as f64;
        let points = (0..=intervals)
            .map(|k| if k == intervals { 1.0 } else { k as f64 / n })
            .collect();
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(invalid("grid must start at 0 and end at 1"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("grid points must be strictly ascending"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of transport steps (NFE).
    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn pairs(&self) -> impl Iterator<Item = TimePair> + '_ {
        self.points.windows(2).map(|w| TimePair { t: w[0], r: w[1] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub output: PointBatch,
    /// All `N + 1` states when recording was requested.
    pub trajectory: Option<Vec<Array2<f64>>>,
}

fn one_step(net: &TransportNet, x: &Array2<f64>, pair: TimePair, labels: Option<&[usize]>) -> Result<Array2<f64>> {
    let n = x.nrows();
    match net.arch().time_query {
        TimeQuery::Interval => {
            let times = vec![pair; n];
            net.transport_rows(&NetInput {
                x: x.view(),
                times: &times,
                labels,
            })
        }
        TimeQuery::Instant => {
            // Euler step on the instantaneous velocity v(x, t)
            let times = vec![TimePair { t: pair.t, r: pair.t }; n];
            let (v, _) = net.forward_cached(&NetInput {
                x: x.view(),
                times: &times,
                labels,
            })?;
            Ok(x + &(v * pair.step()))
        }
    }
}

/// Runs `x ← x + (t_{m+1} − t_m) u(x, t_m, t_{m+1})` over the grid.
///
/// Conditional networks need `labels`, one per source row.
pub fn generate(
    net: &TransportNet,
    source: &PointBatch,
    grid: &TimeGrid,
    record_trajectory: bool,
    labels: Option<&[usize]>,
) -> Result<Generation> {
    let labels = labels.or(source.labels()).filter(|_| net.arch().class_count > 0);
    let mut x = source.data().to_owned();
    let mut trajectory = record_trajectory.then(|| vec![x.clone()]);
    for (m, pair) in grid.pairs().enumerate() {
        x = one_step(net, &x, pair, labels).map_err(|e| match e {
            Error::NonFinite(_) => Error::Inference { step: m },
            other => other,
        })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inference { step: m });
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(x.clone());
        }
    }
    let output = match labels {
        Some(l) => PointBatch::with_labels(x, l.to_vec())?,
        None => PointBatch::new(x)?,
    };
    Ok(Generation { output, trajectory })
}
