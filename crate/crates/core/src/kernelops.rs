//! Pairwise costs, Gibbs logits, row softmax and log-domain Sinkhorn scaling.
//!
//! All kernel arithmetic stays in the log domain. Exponentials are only
//! taken after subtracting a row (or column) maximum, so temperatures down
//! to 1e-2 on O(1) data never overflow.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `½‖x − y‖²`
    #[default]
    SqEuclidHalf,
    /// `‖x − y‖`
    Euclid,
}

/// Gibbs kernel `k(x, y) = exp(−C(x, y) / τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub cost: CostKind,
    pub tau: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            cost: CostKind::SqEuclidHalf,
            tau: 1.0,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("kernel temperature must be positive, got {tau}")));
    }
    Ok(())
}

pub fn pairwise_cost(x: ArrayView2<f64>, y: ArrayView2<f64>, cost: CostKind) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(invalid(format!(
            "pairwise_cost: dimensions {} and {} differ",
            x.ncols(),
            y.ncols()
        )));
    }
    let mut out = Array2::zeros((x.nrows(), y.nrows()));
    for (i, xi) in x.rows().into_iter().enumerate() {
        for (j, yj) in y.rows().into_iter().enumerate() {
            let sq: f64 = xi.iter().zip(yj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            out[[i, j]] = match cost {
                CostKind::SqEuclidHalf => 0.5 * sq,
                CostKind::Euclid => sq.sqrt(),
            };
        }
    }
    Ok(out)
}

/// Log-kernel `−C / τ`.
pub fn gibbs_logits(costs: ArrayView2<f64>, tau: f64) -> Array2<f64> {
    costs.mapv(|c| -c / tau)
}

fn softmax_row_into(row: ArrayView1<f64>, out: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(row.iter()) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-stochastic normalization of `exp(logits)` via max-shifted exponentials.
pub fn row_softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (row, mut o) in logits.rows().into_iter().zip(out.rows_mut()) {
        softmax_row_into(row, o.as_slice_mut().expect("fresh array is contiguous"));
    }
    out
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Result of a Sinkhorn run: `plan = exp(logits + row_potential ⊕ col_potential)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPlan {
    pub plan: Array2<f64>,
    pub row_potential: Array1<f64>,
    pub col_potential: Array1<f64>,
    /// `max_i |Σ_j plan_ij − a_i|`
    pub row_marginal_err: f64,
    /// `max_j |Σ_i plan_ij − b_j|`
    pub col_marginal_err: f64,
}

impl CouplingPlan {
    pub fn marginal_err(&self) -> f64 {
        self.row_marginal_err.max(self.col_marginal_err)
    }

    /// Row-normalized plan. The row potential cancels, so this is the row
    /// softmax of `logits + col_potential`; with a zero column potential it is
    /// bitwise identical to [`row_softmax`] of the logits.
    pub fn row_weights(&self, logits: ArrayView2<f64>) -> Array2<f64> {
        let shifted = &logits + &self.col_potential.view().insert_axis(Axis(0));
        row_softmax(shifted.view())
    }
}

/// Log-domain Sinkhorn scaling of the Gibbs kernel `exp(logits)`.
///
/// `iters` counts half-steps: odd half-steps rescale rows to `row_marg`,
/// even ones rescale columns to `col_marg`. One half-step therefore only
/// row-normalizes, which recovers the plain drift weights. There is no
/// convergence threshold.
pub fn sinkhorn_from_logits(
    logits: ArrayView2<f64>,
    row_marg: ArrayView1<f64>,
    col_marg: ArrayView1<f64>,
    iters: usize,
) -> Result<CouplingPlan> {
    if iters == 0 {
        return Err(invalid("sinkhorn needs at least one iteration"));
    }
    let (n, m) = logits.dim();
    if row_marg.len() != n || col_marg.len() != m {
        return Err(invalid(format!(
            "sinkhorn: marginals of length {}/{} for a {n}x{m} problem",
            row_marg.len(),
            col_marg.len()
        )));
    }
    for marg in [row_marg, col_marg] {
        if marg.iter().any(|&v| !(v >= 0.0)) || (marg.sum() - 1.0).abs() > 1e-9 {
            return Err(invalid("sinkhorn marginals must be nonnegative and sum to 1"));
        }
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sinkhorn logits".into()));
    }

    let log_a = row_marg.mapv(f64::ln);
    let log_b = col_marg.mapv(f64::ln);
    let mut u = Array1::<f64>::zeros(n);
    let mut v = Array1::<f64>::zeros(m);
    for k in 0..iters {
        if k % 2 == 0 {
            for i in 0..n {
                let row = logits.row(i);
                u[i] = log_a[i] - log_sum_exp(row.iter().zip(v.iter()).map(|(l, vj)| l + vj));
            }
        } else {
            for j in 0..m {
                let col = logits.column(j);
                v[j] = log_b[j] - log_sum_exp(col.iter().zip(u.iter()).map(|(l, ui)| l + ui));
            }
        }
    }

    let mut plan = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            plan[[i, j]] = (logits[[i, j]] + u[i] + v[j]).exp();
        }
    }
    let row_marginal_err = plan
        .sum_axis(Axis(1))
        .iter()
        .zip(row_marg.iter())
        .map(|(s, a)| (s - a).abs())
        .fold(0.0, f64::max);
    let col_marginal_err = plan
        .sum_axis(Axis(0))
        .iter()
        .zip(col_marg.iter())
        .map(|(s, b)| (s - b).abs())
        .fold(0.0, f64::max);
    Ok(CouplingPlan {
        plan,
        row_potential: u,
        col_potential: v,
        row_marginal_err,
        col_marginal_err,
    })
}

pub fn uniform_marginal(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}
