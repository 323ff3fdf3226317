//! Grouped drift field `V = V⁺ − V⁻`.
//!
//! For each group the query states are attracted toward a kernel-weighted
//! average of the positive states and pushed away from a kernel-weighted
//! average of the negative states. Kernels are never evaluated across
//! groups: samples at different time pairs live on different marginals.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernelops::{
    check_tau, gibbs_logits, pairwise_cost, sinkhorn_from_logits, uniform_marginal, KernelSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Temperature of the negative kernel; defaults to `kernel.tau`.
    #[serde(default)]
    pub tau_neg: Option<f64>,
    /// Sinkhorn half-steps; 1 gives plain row-normalized kernel weights.
    #[serde(default = "one")]
    pub sinkhorn_iters: usize,
}

fn one() -> usize {
    1
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            tau_neg: None,
            sinkhorn_iters: 1,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if let Some(t) = self.tau_neg {
            check_tau(t)?;
        }
        if self.sinkhorn_iters == 0 {
            return Err(invalid("sinkhorn_iters must be at least 1"));
        }
        Ok(())
    }

    pub fn tau_pos(&self) -> f64 {
        self.kernel.tau
    }

    pub fn tau_neg(&self) -> f64 {
        self.tau_neg.unwrap_or(self.kernel.tau)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOutput {
    /// `[G, B, d]`
    pub v: Array3<f64>,
    /// Per-group marginal error of the positive coupling.
    pub pos_plan_err: Vec<f64>,
    /// Per-group marginal error of the negative coupling.
    pub neg_plan_err: Vec<f64>,
}

impl DriftOutput {
    /// Mean Euclidean norm of the drift vectors.
    pub fn mean_norm(&self) -> f64 {
        let (g, b, _) = self.v.dim();
        let total: f64 = self
            .v
            .rows()
            .into_iter()
            .map(|row| row.dot(&row).sqrt())
            .sum();
        total / (g * b) as f64
    }
}

/// Kernel-weighted barycenter of `targets` for every query, plus the
/// coupling's marginal error.
fn attraction(
    queries: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    tau: f64,
    cfg: &DriftConfig,
) -> Result<(Array2<f64>, f64)> {
    let costs = pairwise_cost(queries, targets, cfg.kernel.cost)?;
    let logits = gibbs_logits(costs.view(), tau);
    let row = uniform_marginal(queries.nrows());
    let col = uniform_marginal(targets.nrows());
    let plan = sinkhorn_from_logits(logits.view(), row.view(), col.view(), cfg.sinkhorn_iters)?;
    let weights = plan.row_weights(logits.view());
    Ok((weights.dot(&targets), plan.marginal_err()))
}

/// Drift for a single group of `[B, d]` states.
pub fn group_drift(
    queries: ArrayView2<f64>,
    pos: ArrayView2<f64>,
    neg: ArrayView2<f64>,
    cfg: &DriftConfig,
) -> Result<(Array2<f64>, f64, f64)> {
    let (pos_mean, pos_err) = attraction(queries, pos, cfg.tau_pos(), cfg)?;
    let (neg_mean, neg_err) = attraction(queries, neg, cfg.tau_neg(), cfg)?;
    Ok((pos_mean - neg_mean, pos_err, neg_err))
}

fn check_inputs(queries: &ArrayView3<f64>, pos: &ArrayView3<f64>, neg: &ArrayView3<f64>) -> Result<()> {
    if queries.dim() != pos.dim() || queries.dim() != neg.dim() {
        return Err(invalid(format!(
            "grouped_drift: shapes {:?}, {:?}, {:?} differ",
            queries.dim(),
            pos.dim(),
            neg.dim()
        )));
    }
    let (g, b, _) = queries.dim();
    if g == 0 || b == 0 {
        return Err(invalid("grouped_drift: empty batch"));
    }
    for (name, t) in [("queries", queries), ("pos", pos), ("neg", neg)] {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grouped_drift: {name} not finite")));
        }
    }
    Ok(())
}

fn assemble(
    dim: (usize, usize, usize),
    parts: Vec<(Array2<f64>, f64, f64)>,
) -> DriftOutput {
    let mut v = Array3::zeros(dim);
    let mut pos_plan_err = Vec::with_capacity(parts.len());
    let mut neg_plan_err = Vec::with_capacity(parts.len());
    for (k, (vg, pe, ne)) in parts.into_iter().enumerate() {
        v.slice_mut(s![k, .., ..]).assign(&vg);
        pos_plan_err.push(pe);
        neg_plan_err.push(ne);
    }
    DriftOutput {
        v,
        pos_plan_err,
        neg_plan_err,
    }
}

/// `V = Σ_j W⁺_ij pos_j − Σ_j W⁻_ij neg_j`, evaluated independently per group.
///
/// The negative sum includes the query itself when `neg` holds the queries.
pub fn grouped_drift(
    queries: ArrayView3<f64>,
    pos: ArrayView3<f64>,
    neg: ArrayView3<f64>,
    cfg: &DriftConfig,
) -> Result<DriftOutput> {
    check_inputs(&queries, &pos, &neg)?;
    cfg.validate()?;
    let parts = (0..queries.dim().0)
        .map(|k| {
            group_drift(
                queries.index_axis(ndarray::Axis(0), k),
                pos.index_axis(ndarray::Axis(0), k),
                neg.index_axis(ndarray::Axis(0), k),
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(queries.dim(), parts))
}

/// Same as [`grouped_drift`] with groups spread over the current rayon pool.
/// Each group is reduced sequentially, so results are bitwise identical.
pub fn grouped_drift_par(
    queries: ArrayView3<f64>,
    pos: ArrayView3<f64>,
    neg: ArrayView3<f64>,
    cfg: &DriftConfig,
) -> Result<DriftOutput> {
    check_inputs(&queries, &pos, &neg)?;
    cfg.validate()?;
    let parts = (0..queries.dim().0)
        .into_par_iter()
        .map(|k| {
            group_drift(
                queries.index_axis(ndarray::Axis(0), k),
                pos.index_axis(ndarray::Axis(0), k),
                neg.index_axis(ndarray::Axis(0), k),
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(queries.dim(), parts))
}

/// The stop-gradient regression target `queries + V`.
pub fn drift_target(queries: ArrayView3<f64>, drift: &DriftOutput) -> Result<Array3<f64>> {
    if queries.dim() != drift.v.dim() {
        return Err(invalid("drift_target: shape mismatch"));
    }
    Ok(&queries + &drift.v)
}
