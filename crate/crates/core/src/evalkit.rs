//! Exact empirical 2-Wasserstein distances, transport bound checks and the
//! analytic Gaussian velocity oracle.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampler::TimeGrid;
use crate::seeded_rng;
use crate::synthdata::PointBatch;

/// Largest problem the cubic assignment solver accepts.
pub const MAX_ASSIGNMENT: usize = 1024;

const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct W2Result {
    pub w2_squared: f64,
    /// `assignment[i]` is the index in `b` matched to `a[i]`.
    pub assignment: Vec<usize>,
}

/// Minimum-cost perfect matching on a square cost matrix by successive
/// shortest augmenting paths with vertex potentials.
pub fn linear_assignment(cost: ArrayView2<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n != m {
        return Err(invalid(format!("assignment needs a square matrix, got {n}x{m}")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment costs".into()));
    }
    // 1-based columns; column 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        min_to.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    Ok(assignment)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(1/n) Σ_i ‖a_i − b_{π(i)}‖²` for a given matching.
pub fn matching_cost(a: ArrayView2<f64>, b: ArrayView2<f64>, assignment: &[usize]) -> f64 {
    let n = a.nrows();
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| sq_dist(a.row(i), b.row(j)))
        .sum::<f64>()
        / n as f64
}

/// Exact squared 2-Wasserstein distance between equal-size, equal-weight point sets.
pub fn exact_w2(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<W2Result> {
    if a.nrows() != b.nrows() {
        return Err(invalid(format!(
            "exact_w2 needs equal counts, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.ncols() != b.ncols() {
        return Err(invalid("exact_w2: dimensions differ"));
    }
    let n = a.nrows();
    if n == 0 {
        return Err(invalid("exact_w2 needs at least one point"));
    }
    if n > MAX_ASSIGNMENT {
        return Err(invalid(format!("exact_w2 supports at most {MAX_ASSIGNMENT} points, got {n}")));
    }
    let cost = Array2::from_shape_fn((n, n), |(i, j)| sq_dist(a.row(i), b.row(j)));
    let assignment = linear_assignment(cost.view())?;
    Ok(W2Result {
        w2_squared: matching_cost(a, b, &assignment),
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn lerp(x0: ArrayView2<f64>, x1: ArrayView2<f64>, t: f64) -> Array2<f64> {
    let mut out = x0.to_owned();
    out.zip_mut_with(&x1, |a, &b| *a = (1.0 - t) * *a + t * b);
    out
}

fn mean_sq_displacement(x0: ArrayView2<f64>, x1: ArrayView2<f64>) -> f64 {
    let n = x0.nrows() as f64;
    x0.rows()
        .into_iter()
        .zip(x1.rows())
        .map(|(a, b)| sq_dist(a, b))
        .sum::<f64>()
        / n
}

fn check_endpoints(x0: ArrayView2<f64>, x1: ArrayView2<f64>) -> Result<()> {
    if x0.dim() != x1.dim() {
        return Err(invalid("endpoint sets must have the same shape"));
    }
    Ok(())
}

/// `W₂(p_t, p_r) ≤ |r − t| (E‖X₁ − X₀‖²)^{1/2}` on shared endpoint rows.
pub fn check_w2_interval_bound(x0: ArrayView2<f64>, x1: ArrayView2<f64>, t: f64, r: f64) -> Result<BoundReport> {
    check_endpoints(x0, x1)?;
    let w2 = exact_w2(lerp(x0, x1, t).view(), lerp(x0, x1, r).view())?;
    let lhs = w2.w2_squared.sqrt();
    let rhs = (r - t).abs() * mean_sq_displacement(x0, x1).sqrt();
    Ok(BoundReport {
        lhs,
        rhs,
        holds: lhs <= rhs + BOUND_SLACK,
    })
}

/// `Σ_m W₂²(p_{t_m}, p_{t_{m+1}}) / (t_{m+1} − t_m) ≤ E‖X₁ − X₀‖²`.
pub fn check_action_bound(x0: ArrayView2<f64>, x1: ArrayView2<f64>, grid: &TimeGrid) -> Result<BoundReport> {
    check_endpoints(x0, x1)?;
    let mut action = 0.0;
    for pair in grid.pairs() {
        let w2 = exact_w2(lerp(x0, x1, pair.t).view(), lerp(x0, x1, pair.r).view())?;
        action += w2.w2_squared / pair.step();
    }
    let bound = mean_sq_displacement(x0, x1);
    Ok(BoundReport {
        lhs: action,
        rhs: bound,
        holds: action <= bound + BOUND_SLACK,
    })
}

/// `p₀ = N(0, I)`, `p₁ = N(0, σ₁² I)` with the linear path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTaskSpec {
    pub sigma1: f64,
    pub dim: usize,
}

impl GaussianTaskSpec {
    pub fn new(sigma1: f64, dim: usize) -> Result<Self> {
        if !(sigma1 > 0.0 && sigma1.is_finite()) || dim == 0 {
            return Err(invalid("gaussian task needs sigma1 > 0 and dim >= 1"));
        }
        Ok(Self { sigma1, dim })
    }

    /// Standard deviation of `X_t`.
    pub fn marginal_std(&self, t: f64) -> f64 {
        let s2 = self.sigma1 * self.sigma1;
        ((1.0 - t) * (1.0 - t) + t * t * s2).sqrt()
    }

    /// `v(x, t) = c(t) x`.
    pub fn velocity_coeff(&self, t: f64) -> f64 {
        let s2 = self.sigma1 * self.sigma1;
        (t * s2 - (1.0 - t)) / ((1.0 - t) * (1.0 - t) + t * t * s2)
    }

    /// Mean velocity of the exact flow between `t` and `r`: the flow map is
    /// the scaling `x ↦ (s(r)/s(t)) x`.
    pub fn mean_velocity_coeff(&self, t: f64, r: f64) -> f64 {
        if r == t {
            return self.velocity_coeff(t);
        }
        (self.marginal_std(r) / self.marginal_std(t) - 1.0) / (r - t)
    }
}

/// `E[X₁ − X₀ | X_t = x]` for the Gaussian task.
pub fn gaussian_marginal_velocity(x: ArrayView1<f64>, t: f64, spec: &GaussianTaskSpec) -> Array1<f64> {
    x.mapv(|v| spec.velocity_coeff(t) * v)
}

pub fn gaussian_mean_velocity(x: ArrayView1<f64>, t: f64, r: f64, spec: &GaussianTaskSpec) -> Array1<f64> {
    x.mapv(|v| spec.mean_velocity_coeff(t, r) * v)
}

fn subsample(x: ArrayView2<f64>, rows: &[usize], k: usize, seed: u64) -> Array2<f64> {
    let picked = if rows.len() == k {
        rows.to_vec()
    } else {
        let mut idx = index::sample(&mut seeded_rng(seed), rows.len(), k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| rows[i]).collect()
    };
    x.select(ndarray::Axis(0), &picked)
}

fn balanced_w2(a: ArrayView2<f64>, ra: &[usize], b: ArrayView2<f64>, rb: &[usize], seed: u64) -> Result<f64> {
    let k = ra.len().min(rb.len()).min(MAX_ASSIGNMENT);
    let sa = subsample(a, ra, k, seed);
    let sb = subsample(b, rb, k, seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok(exact_w2(sa.view(), sb.view())?.w2_squared)
}

/// Squared 2-Wasserstein distance between generated and reference points;
/// for labeled data, the mean over classes of the class-restricted value.
///
/// With `subsample_seed` set, the larger side (or class) is reduced to the
/// smaller count by a seeded draw; otherwise counts must match.
pub fn emd_to_target(generated: &PointBatch, reference: &PointBatch, subsample_seed: Option<u64>) -> Result<f64> {
    if generated.dim() != reference.dim() {
        return Err(Error::Metric("generated and reference dimensions differ".into()));
    }
    let check_counts = |a: usize, b: usize, what: &str| {
        if a != b && subsample_seed.is_none() {
            return Err(Error::Metric(format!(
                "{what}: {a} generated vs {b} reference points (enable subsampling)"
            )));
        }
        Ok(())
    };
    let seed = subsample_seed.unwrap_or(0);
    match (generated.labels(), reference.labels()) {
        (None, None) => {
            check_counts(generated.len(), reference.len(), "count mismatch")?;
            let all_a: Vec<usize> = (0..generated.len()).collect();
            let all_b: Vec<usize> = (0..reference.len()).collect();
            balanced_w2(generated.data(), &all_a, reference.data(), &all_b, seed)
        }
        (Some(la), Some(lb)) => {
            let mut classes: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
            for (i, &c) in la.iter().enumerate() {
                classes.entry(c).or_default().0.push(i);
            }
            for (i, &c) in lb.iter().enumerate() {
                classes.entry(c).or_default().1.push(i);
            }
            let mut total = 0.0;
            for (&c, (ra, rb)) in &classes {
                if ra.is_empty() {
                    return Err(Error::Metric(format!("class {c} missing from generated points")));
                }
                if rb.is_empty() {
                    return Err(Error::Metric(format!("class {c} missing from reference points")));
                }
                check_counts(ra.len(), rb.len(), &format!("class {c}"))?;
                total += balanced_w2(generated.data(), ra, reference.data(), rb, seed.wrapping_add(c as u64))?;
            }
            Ok(total / classes.len() as f64)
        }
        _ => Err(Error::Metric(
            "cannot compare labeled and unlabeled point sets".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub seed: u64,
    pub config_hash: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_sets_have_zero_distance_and_identity_matching() {
        let a = array![[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]];
        let w = exact_w2(a.view(), a.view()).unwrap();
        assert_eq!(w.w2_squared, 0.0);
        assert_eq!(w.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn shift_gives_squared_offset() {
        let a = array![[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5], [4.0, 4.0]];
        let b = &a + &array![0.25, -0.5];
        let w = exact_w2(a.view(), b.view()).unwrap();
        assert!((w.w2_squared - 0.3125).abs() < 1e-12);
    }

    #[test]
    fn unequal_counts_rejected() {
        let a = Array2::<f64>::zeros((3, 2));
        let b = Array2::<f64>::zeros((2, 2));
        assert!(exact_w2(a.view(), b.view()).is_err());
    }

    #[test]
    fn crossing_pairs_are_uncrossed() {
        let a = array![[0.0], [1.0]];
        let b = array![[1.1], [0.1]];
        let w = exact_w2(a.view(), b.view()).unwrap();
        assert_eq!(w.assignment, vec![1, 0]);
        assert!((w.w2_squared - 0.01).abs() < 1e-15);
    }

    #[test]
    fn interval_bound_hand_case() {
        let x0 = array![[0.0, 0.0], [1.0, 0.0]];
        let x1 = array![[0.0, 1.0], [1.0, 1.0]];
        let rep = check_w2_interval_bound(x0.view(), x1.view(), 0.0, 1.0).unwrap();
        assert_eq!((rep.lhs, rep.rhs, rep.holds), (1.0, 1.0, true));
        let same = check_w2_interval_bound(x0.view(), x1.view(), 0.4, 0.4).unwrap();
        assert_eq!((same.lhs, same.rhs, same.holds), (0.0, 0.0, true));
    }

    #[test]
    fn action_of_translation_is_tight() {
        let x0 = array![[0.0, 0.0], [1.0, 3.0], [-2.0, 1.0]];
        let x1 = &x0 + &array![1.0, -2.0];
        for n in [1, 2, 5] {
            let rep = check_action_bound(x0.view(), x1.view(), &TimeGrid::uniform(n).unwrap()).unwrap();
            assert!((rep.lhs - 5.0).abs() < 1e-9, "{rep:?}");
            assert!((rep.rhs - 5.0).abs() < 1e-12);
            assert!(rep.holds);
        }
    }

    #[test]
    fn gaussian_velocity_examples() {
        let unit = GaussianTaskSpec::new(1.0, 2).unwrap();
        assert_eq!(unit.velocity_coeff(0.5), 0.0);
        let two = GaussianTaskSpec::new(2.0, 2).unwrap();
        let v = gaussian_marginal_velocity(array![1.0, 0.0].view(), 0.5, &two);
        assert!((v[0] - 1.2).abs() < 1e-15 && v[1] == 0.0);
        assert_eq!(gaussian_marginal_velocity(array![0.0, 0.0].view(), 0.3, &two), array![0.0, 0.0]);
    }

    #[test]
    fn mean_velocity_tends_to_instantaneous() {
        let spec = GaussianTaskSpec::new(2.0, 2).unwrap();
        let t = 0.3;
        let err = |h: f64| (spec.mean_velocity_coeff(t, t + h) - spec.velocity_coeff(t)).abs();
        assert!(err(1e-6) < 1e-5);
        assert!(err(0.05) < err(0.1) && err(0.1) < err(0.2));
        // whole-interval mean velocity is σ₁ − 1
        assert!((spec.mean_velocity_coeff(0.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn emd_label_handling() {
        let a = PointBatch::with_labels(array![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [6.0, 5.0]], vec![0, 0, 1, 1]).unwrap();
        let shifted = PointBatch::with_labels(
            array![[0.0, 1.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0]],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        assert_eq!(emd_to_target(&a, &a, None).unwrap(), 0.0);
        assert!((emd_to_target(&a, &shifted, None).unwrap() - 0.5).abs() < 1e-15);
        let unlabeled = PointBatch::new(a.data().to_owned()).unwrap();
        assert!(matches!(emd_to_target(&a, &unlabeled, None), Err(Error::Metric(_))));
        let missing = PointBatch::with_labels(a.data().to_owned(), vec![0, 0, 0, 0]).unwrap();
        let err = emd_to_target(&missing, &a, Some(1)).unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }

    #[test]
    fn emd_subsampling_is_deterministic() {
        let a = PointBatch::new(Array2::from_shape_fn((10, 2), |(i, k)| (i * 2 + k) as f64)).unwrap();
        let b = PointBatch::new(Array2::from_shape_fn((6, 2), |(i, k)| (i + k) as f64 * 0.5)).unwrap();
        assert!(emd_to_target(&a, &b, None).is_err());
        let x = emd_to_target(&a, &b, Some(4)).unwrap();
        assert_eq!(x, emd_to_target(&a, &b, Some(4)).unwrap());
    }
}
