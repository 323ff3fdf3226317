//! Interpolation schedule, time-pair sampling and grouped batch construction.

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seeded_rng;
use crate::synthdata::PointBatch;

/// Interpolation coefficients `x_t = α(t) x0 + β(t) x1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Linear,
}

impl Schedule {
    pub fn alpha(self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0 - t,
        }
    }

    pub fn beta(self, t: f64) -> f64 {
        match self {
            Schedule::Linear => t,
        }
    }
}

/// A point of the simplex `0 ≤ t ≤ r ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePair {
    pub t: f64,
    pub r: f64,
}

impl TimePair {
    pub fn new(t: f64, r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&r) || t > r {
            return Err(invalid(format!("time pair ({t}, {r}) violates 0 <= t <= r <= 1")));
        }
        Ok(Self { t, r })
    }

    /// Orders two raw draws so that `t ≤ r`; equal draws are kept.
    pub fn from_draws(a: f64, b: f64) -> Self {
        if a <= b {
            Self { t: a, r: b }
        } else {
            Self { t: b, r: a }
        }
    }

    pub fn step(&self) -> f64 {
        self.r - self.t
    }
}

/// Distribution of raw time draws. Pairs are formed from two sorted draws,
/// except for `Fixed` which always yields the same pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeSamplerSpec {
    Uniform,
    /// Logistic sigmoid of `N(mu, sigma²)`.
    Lognorm { mu: f64, sigma: f64 },
    Fixed { t: f64, r: f64 },
}

impl Default for TimeSamplerSpec {
    fn default() -> Self {
        TimeSamplerSpec::Lognorm {
            mu: -0.4,
            sigma: 1.0,
        }
    }
}

impl TimeSamplerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeSamplerSpec::Uniform => Ok(()),
            TimeSamplerSpec::Lognorm { mu, sigma } => {
                if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
                    return Err(invalid(format!("lognorm sampler needs sigma > 0, got {sigma}")));
                }
                Ok(())
            }
            TimeSamplerSpec::Fixed { t, r } => TimePair::new(t, r).map(|_| ()),
        }
    }

    /// One raw time draw in `[0, 1]`. `Fixed` returns its `t`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TimeSamplerSpec::Uniform => rng.random::<f64>(),
            TimeSamplerSpec::Lognorm { mu, sigma } => {
                let z = Normal::new(mu, sigma).expect("validated sigma").sample(rng);
                sigmoid(z)
            }
            TimeSamplerSpec::Fixed { t, .. } => t,
        }
    }

    pub fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> TimePair {
        match *self {
            TimeSamplerSpec::Fixed { t, r } => TimePair { t, r },
            _ => {
                let a = self.draw(rng);
                let b = self.draw(rng);
                TimePair::from_draws(a, b)
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sample_time_pairs(spec: &TimeSamplerSpec, groups: usize, seed: u64) -> Vec<TimePair> {
    sample_time_pairs_with(spec, groups, &mut seeded_rng(seed))
}

pub fn sample_time_pairs_with<R: Rng + ?Sized>(
    spec: &TimeSamplerSpec,
    groups: usize,
    rng: &mut R,
) -> Vec<TimePair> {
    (0..groups).map(|_| spec.draw_pair(rng)).collect()
}

fn interpolate_view(x0: ArrayView2<f64>, x1: ArrayView2<f64>, t: f64, schedule: Schedule) -> Array2<f64> {
    let (a, b) = (schedule.alpha(t), schedule.beta(t));
    let mut out = Array2::zeros(x0.raw_dim());
    ndarray::Zip::from(&mut out)
        .and(&x0)
        .and(&x1)
        .for_each(|o, &p, &q| *o = a * p + b * q);
    out
}

/// `α(t)·x0 + β(t)·x1` row-wise. Labels are taken from `x1`.
pub fn interpolate(x0: &PointBatch, x1: &PointBatch, t: f64, schedule: Schedule) -> Result<PointBatch> {
    if x0.data().dim() != x1.data().dim() {
        return Err(invalid(format!(
            "interpolate: shapes {:?} and {:?} differ",
            x0.data().dim(),
            x1.data().dim()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("interpolate: t = {t} outside [0, 1]")));
    }
    let data = interpolate_view(x0.data(), x1.data(), t, schedule);
    match x1.labels() {
        Some(l) => PointBatch::with_labels(data, l.to_vec()),
        None => PointBatch::new(data),
    }
}

/// `G` groups of `B` paired states `(x_t, x_r)`, each group with its own pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedBatch {
    pub pairs: Vec<TimePair>,
    /// `[G, B, d]`
    pub x_t: Array3<f64>,
    /// `[G, B, d]`
    pub x_r: Array3<f64>,
    /// `[G, B]`, present for class-conditional batches.
    pub labels: Option<Array2<usize>>,
}

impl GroupedBatch {
    pub fn groups(&self) -> usize {
        self.x_t.shape()[0]
    }

    pub fn group_size(&self) -> usize {
        self.x_t.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.x_t.shape()[2]
    }
}

/// Splits the `G·B` endpoint rows into contiguous groups and evaluates each
/// group's conditional path at its own `(t, r)`.
pub fn build_grouped_batch(
    x0: &PointBatch,
    x1: &PointBatch,
    pairs: &[TimePair],
    group_size: usize,
    schedule: Schedule,
) -> Result<GroupedBatch> {
    let g = pairs.len();
    if g == 0 || group_size == 0 {
        return Err(invalid("grouped batch needs G >= 1 and B >= 1"));
    }
    if x0.data().dim() != x1.data().dim() {
        return Err(invalid("x0 and x1 shapes differ"));
    }
    let n = x0.len();
    if !n.is_multiple_of(g) || n / g != group_size {
        return Err(invalid(format!(
            "{n} rows cannot be split into {g} groups of {group_size}"
        )));
    }
    let d = x0.dim();
    let mut x_t = Array3::zeros((g, group_size, d));
    let mut x_r = Array3::zeros((g, group_size, d));
    for (k, pair) in pairs.iter().enumerate() {
        let rows = s![k * group_size..(k + 1) * group_size, ..];
        let a = x0.data().slice_move(rows);
        let b = x1.data().slice_move(rows);
        x_t.slice_mut(s![k, .., ..])
            .assign(&interpolate_view(a, b, pair.t, schedule));
        x_r.slice_mut(s![k, .., ..])
            .assign(&interpolate_view(a, b, pair.r, schedule));
    }
    let labels = x1.labels().map(|l| {
        Array2::from_shape_vec((g, group_size), l.to_vec()).expect("row count checked above")
    });
    Ok(GroupedBatch {
        pairs: pairs.to_vec(),
        x_t,
        x_r,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn batch(rows: &[[f64; 2]]) -> PointBatch {
        PointBatch::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn interpolation_boundaries_are_exact() {
        let x0 = batch(&[[0.3, -1.7], [2.0, 5.5]]);
        let x1 = batch(&[[-4.1, 0.9], [1.25, 3.0]]);
        assert_eq!(interpolate(&x0, &x1, 0.0, Schedule::Linear).unwrap(), x0);
        assert_eq!(interpolate(&x0, &x1, 1.0, Schedule::Linear).unwrap(), x1);
    }

    #[test]
    fn interpolation_quarter_point() {
        let out = interpolate(&batch(&[[0.0, 0.0]]), &batch(&[[2.0, -4.0]]), 0.25, Schedule::Linear)
            .unwrap();
        assert_eq!(out.data(), array![[0.5, -1.0]]);
    }

    #[test]
    fn interpolation_rejects_shape_mismatch() {
        let err = interpolate(&batch(&[[0.0, 0.0]]), &batch(&[[0.0, 0.0], [1.0, 1.0]]), 0.5, Schedule::Linear);
        assert!(err.is_err());
    }

    #[test]
    fn draws_are_sorted_and_ties_kept() {
        assert_eq!(TimePair::from_draws(0.8, 0.3), TimePair { t: 0.3, r: 0.8 });
        assert_eq!(TimePair::from_draws(0.3, 0.3), TimePair { t: 0.3, r: 0.3 });
    }

    #[test]
    fn lognorm_median_is_sigmoid_of_mu() {
        let spec = TimeSamplerSpec::default();
        let mut rng = seeded_rng(42);
        let mut draws: Vec<f64> = (0..1_000_000).map(|_| spec.draw(&mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let median = draws[draws.len() / 2];
        assert!((median - sigmoid(-0.4)).abs() < 0.01, "{median}");
        assert!((sigmoid(-0.4) - 0.4013).abs() < 1e-4);
    }

    #[test]
    fn pairs_always_ordered() {
        for spec in [TimeSamplerSpec::Uniform, TimeSamplerSpec::default()] {
            let pairs = sample_time_pairs(&spec, 1_000_000, 8);
            assert!(pairs.iter().all(|p| 0.0 <= p.t && p.t <= p.r && p.r <= 1.0));
        }
    }

    #[test]
    fn endpoint_group_recovers_endpoints() {
        let x0 = batch(&[[0.1, 0.2], [0.3, 0.4]]);
        let x1 = batch(&[[1.1, 1.2], [1.3, 1.4]]);
        let gb = build_grouped_batch(&x0, &x1, &[TimePair { t: 0.0, r: 1.0 }], 2, Schedule::Linear)
            .unwrap();
        assert_eq!(gb.x_t.index_axis(ndarray::Axis(0), 0), x0.data());
        assert_eq!(gb.x_r.index_axis(ndarray::Axis(0), 0), x1.data());
    }

    #[test]
    fn two_group_hand_example() {
        let x0 = batch(&[[0.0, 0.0], [1.0, 1.0]]);
        let x1 = batch(&[[2.0, 0.0], [3.0, 1.0]]);
        let pairs = [TimePair { t: 0.5, r: 1.0 }, TimePair { t: 0.0, r: 0.5 }];
        let gb = build_grouped_batch(&x0, &x1, &pairs, 1, Schedule::Linear).unwrap();
        assert_eq!(gb.x_t, array![[[1.0, 0.0]], [[1.0, 1.0]]]);
        assert_eq!(gb.x_r, array![[[2.0, 0.0]], [[2.0, 1.0]]]);
    }

    #[test]
    fn degenerate_pair_gives_identical_states() {
        let x0 = batch(&[[0.7, -0.2], [1.9, 4.0]]);
        let x1 = batch(&[[-3.0, 0.5], [0.25, 0.125]]);
        let gb = build_grouped_batch(&x0, &x1, &[TimePair { t: 0.3, r: 0.3 }], 2, Schedule::Linear)
            .unwrap();
        assert_eq!(gb.x_t, gb.x_r);
    }

    #[test]
    fn indivisible_rows_rejected() {
        let x = batch(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let pairs = [TimePair { t: 0.0, r: 1.0 }; 2];
        assert!(build_grouped_batch(&x, &x, &pairs, 1, Schedule::Linear).is_err());
    }

    #[test]
    fn time_pair_validation() {
        assert!(TimePair::new(0.6, 0.4).is_err());
        assert!(TimePair::new(-0.1, 0.4).is_err());
        assert!(TimePair::new(0.4, 0.4).is_ok());
    }
}
