//! Randomized property suites. Each instance draws its data from
//! `seed + index`, so a failing instance can be replayed on its own.

use std::fmt;

use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::driftfield::{grouped_drift, DriftConfig};
use crate::error::{invalid, Result};
use crate::evalkit::{check_action_bound, check_w2_interval_bound, GaussianTaskSpec};
use crate::kernelops::{
    gibbs_logits, pairwise_cost, row_softmax, sinkhorn_from_logits, uniform_marginal, KernelSpec,
};
use crate::netcore::{
    backward_mse, mse_loss, NetArch, Parameterization, TimeEmbedSpec, TransportNet,
};
use crate::sampler::TimeGrid;
use crate::synthdata::{sample_source_with, sample_target_with, DatasetName, DatasetSpec, SourceSpec};
use crate::timepath::TimePair;
use crate::trainer::{train, TrainConfig};
use crate::{seeded_rng, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    DriftEquilibrium,
    GradientFd,
    W2Bounds,
    ActionBound,
    InfinitesimalLimit,
    Sinkhorn,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::DriftEquilibrium,
        Suite::GradientFd,
        Suite::W2Bounds,
        Suite::ActionBound,
        Suite::InfinitesimalLimit,
        Suite::Sinkhorn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::DriftEquilibrium => "drift_equilibrium",
            Suite::GradientFd => "gradient_fd",
            Suite::W2Bounds => "w2_bounds",
            Suite::ActionBound => "action_bound",
            Suite::InfinitesimalLimit => "infinitesimal_limit",
            Suite::Sinkhorn => "sinkhorn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| invalid(format!("unknown suite {s:?}")))
    }
}

/// One checked property: the worst observed value against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub property: String,
    pub instances: usize,
    pub failures: usize,
    /// Largest observed value of the checked quantity (for bounds: `lhs − rhs`).
    pub worst: f64,
    pub threshold: f64,
    pub first_failing_seed: Option<u64>,
}

impl PropertyResult {
    fn new(property: &str, threshold: f64) -> Self {
        Self {
            property: property.into(),
            instances: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
            threshold,
            first_failing_seed: None,
        }
    }

    /// Records one instance; `value` must be strictly below the threshold
    /// (at or below when `inclusive`).
    fn record(&mut self, seed: u64, value: f64, inclusive: bool) {
        self.instances += 1;
        if !(value <= self.worst) {
            self.worst = value;
        }
        let ok = if inclusive { value <= self.threshold } else { value < self.threshold };
        if !ok {
            self.failures += 1;
            self.first_failing_seed.get_or_insert(seed);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.instances > 0
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} {}/{} failures, worst {:.3e} (threshold {:.1e})",
            self.property,
            if self.passed() { "pass" } else { "FAIL" },
            self.failures,
            self.instances,
            self.worst,
            self.threshold
        )?;
        if let Some(s) = self.first_failing_seed {
            write!(f, ", first failing seed {s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn first_failing_seed(&self) -> Option<u64> {
        self.properties.iter().find_map(|p| p.first_failing_seed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} (seed {})", self.suite.name(), self.seed)?;
        for p in &self.properties {
            writeln!(f, "  {p}")?;
        }
        Ok(())
    }
}

/// Instance counts; the defaults are the full suite sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSizes {
    pub drift_instances: usize,
    pub gradient_instances: usize,
    pub w2_instances: usize,
    pub action_instances: usize,
    pub sinkhorn_instances: usize,
    pub gaussian_steps: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            drift_instances: 1000,
            gradient_instances: 100,
            w2_instances: 1000,
            action_instances: 1000,
            sinkhorn_instances: 50,
            gaussian_steps: 5000,
        }
    }
}

fn normal_array(rng: &mut SeededRng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || scale * Distribution::<f64>::sample(&StandardNormal, rng))
}

fn random_pair(rng: &mut SeededRng) -> TimePair {
    TimePair::from_draws(rng.random(), rng.random())
}

fn log_uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

pub fn run_suite(suite: Suite, seed: u64, sizes: &SuiteSizes) -> Result<SuiteReport> {
    let properties = match suite {
        Suite::DriftEquilibrium => vec![drift_equilibrium(seed, sizes.drift_instances)?],
        Suite::GradientFd => vec![
            network_gradient(seed, sizes.gradient_instances)?,
            particle_gradient(seed, sizes.gradient_instances)?,
        ],
        Suite::W2Bounds => vec![w2_interval_bounds(seed, sizes.w2_instances)?],
        Suite::ActionBound => vec![action_bounds(seed, sizes.action_instances)?],
        Suite::InfinitesimalLimit => infinitesimal_limit(seed, sizes.gaussian_steps)?,
        Suite::Sinkhorn => sinkhorn_checks(seed, sizes.sinkhorn_instances)?,
    };
    Ok(SuiteReport {
        suite,
        seed,
        properties,
    })
}

/// `pos = neg` gives `V = 0` for arbitrary queries.
pub fn drift_equilibrium(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut res = PropertyResult::new("max |V| with pos = neg", 1e-12);
    for i in 0..instances as u64 {
        let s = seed.wrapping_add(i);
        let mut rng = seeded_rng(s);
        let (g, b, d) = (rng.random_range(1..=4), rng.random_range(1..=16), rng.random_range(1..=3));
        let q = Array3::from_shape_simple_fn((g, b, d), || 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let p = Array3::from_shape_simple_fn((g, b, d), || 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let cfg = DriftConfig {
            kernel: KernelSpec {
                tau: log_uniform(&mut rng, 0.05, 5.0),
                ..KernelSpec::default()
            },
            tau_neg: None,
            sinkhorn_iters: rng.random_range(1..=6),
        };
        let out = grouped_drift(q.view(), p.view(), p.view(), &cfg)?;
        let worst = out.v.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        res.record(s, worst, false);
    }
    Ok(res)
}

fn random_small_net(rng: &mut SeededRng) -> Result<TransportNet> {
    let hidden = rng.random_range(3..=6);
    let embed = TimeEmbedSpec {
        fourier_features: rng.random_range(1..=3),
        ..TimeEmbedSpec::default()
    };
    let mut arch = NetArch::new(2, hidden, embed);
    if rng.random_bool(0.25) {
        arch.parameterization = Parameterization::DirectState;
    }
    let params = (0..arch.param_count())
        .map(|_| 0.7 * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    TransportNet::from_params(arch, params)
}

/// Relative error of one gradient coordinate, floored at 1e-2 so that
/// near-zero coordinates are compared absolutely at 1e-6.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1e-2)
}

/// Reverse-mode gradient of the transport MSE against central differences.
pub fn network_gradient(seed: u64, instances: usize) -> Result<PropertyResult> {
    const EPS: f64 = 1e-5;
    let mut res = PropertyResult::new("network gradient vs central differences (rel)", 1e-4);
    for i in 0..instances as u64 {
        let s = seed.wrapping_add(i);
        let mut rng = seeded_rng(s);
        let mut net = random_small_net(&mut rng)?;
        let n = rng.random_range(1..=6);
        let x = normal_array(&mut rng, (n, 2), 1.5);
        let target = normal_array(&mut rng, (n, 2), 1.5);
        let pair = random_pair(&mut rng);
        let grad = backward_mse(&net, x.view(), pair.t, pair.r, target.view())?;
        let mut worst = 0.0_f64;
        for k in 0..grad.len() {
            let orig = net.params()[k];
            net.params_mut()[k] = orig + EPS;
            let up = mse_loss(&net, x.view(), pair.t, pair.r, target.view())?;
            net.params_mut()[k] = orig - EPS;
            let down = mse_loss(&net, x.view(), pair.t, pair.r, target.view())?;
            net.params_mut()[k] = orig;
            worst = worst.max(relative_error(grad[k], (up - down) / (2.0 * EPS)));
        }
        res.record(s, worst, false);
    }
    Ok(res)
}

/// `½ Σ_i ‖x̂_i − c_i‖²` with the target `c = sg(x̂ + V)` frozen.
pub fn particle_loss(particles: ArrayView2<f64>, frozen_target: ArrayView2<f64>) -> f64 {
    0.5 * (&particles - &frozen_target).iter().map(|v| v * v).sum::<f64>()
}

/// The stop-gradient loss differentiated in the particles gives `−V`.
pub fn particle_gradient(seed: u64, instances: usize) -> Result<PropertyResult> {
    const EPS: f64 = 1e-6;
    let mut res = PropertyResult::new("particle gradient of sg loss vs -V (rel)", 1e-5);
    for i in 0..instances as u64 {
        let s = seed.wrapping_add(i);
        let mut rng = seeded_rng(s);
        let (b, d) = (rng.random_range(1..=12), rng.random_range(1..=3));
        let xh = normal_array(&mut rng, (b, d), 1.0);
        let y = normal_array(&mut rng, (b, d), 1.0) + 0.5;
        let cfg = DriftConfig {
            kernel: KernelSpec {
                tau: log_uniform(&mut rng, 0.2, 4.0),
                ..KernelSpec::default()
            },
            ..DriftConfig::default()
        };
        let q = xh.clone().insert_axis(ndarray::Axis(0));
        let pos = y.insert_axis(ndarray::Axis(0));
        let v = grouped_drift(q.view(), pos.view(), q.view(), &cfg)?.v.index_axis_move(ndarray::Axis(0), 0);
        let target = &xh + &v;
        let mut worst = 0.0_f64;
        let mut moved = xh.clone();
        for idx in 0..b * d {
            let (r, c) = (idx / d, idx % d);
            let orig = moved[[r, c]];
            moved[[r, c]] = orig + EPS;
            let up = particle_loss(moved.view(), target.view());
            moved[[r, c]] = orig - EPS;
            let down = particle_loss(moved.view(), target.view());
            moved[[r, c]] = orig;
            let fd = (up - down) / (2.0 * EPS);
            let expected = -v[[r, c]];
            worst = worst.max((fd - expected).abs() / expected.abs().max(1e-2));
        }
        res.record(s, worst, false);
    }
    Ok(res)
}

fn random_endpoints(rng: &mut SeededRng, n: usize) -> (Array2<f64>, Array2<f64>) {
    let source = if rng.random_bool(0.5) {
        SourceSpec::default()
    } else {
        SourceSpec::gaussian(1.0).expect("positive std")
    };
    let names = [
        DatasetName::TwoMoons,
        DatasetName::Checkerboard,
        DatasetName::LetterF,
        DatasetName::LetterM,
        DatasetName::GaussianIso,
    ];
    let target = DatasetSpec::new(names[rng.random_range(0..names.len())]);
    let x0 = sample_source_with(&source, n, rng).into_data();
    let x1 = sample_target_with(&target, n, rng).into_data();
    (x0, x1)
}

/// `W₂(p_t, p_r) ≤ |r − t| (E‖X₁ − X₀‖²)^{1/2}`; value is `lhs − rhs`.
pub fn w2_interval_bounds(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut res = PropertyResult::new("W2 interval bound violation (lhs - rhs)", 1e-9);
    for i in 0..instances as u64 {
        let s = seed.wrapping_add(i);
        let mut rng = seeded_rng(s);
        let n = if i % 100 == 99 { 256 } else { rng.random_range(2..=96) };
        let (x0, x1) = random_endpoints(&mut rng, n);
        let pair = random_pair(&mut rng);
        let rep = check_w2_interval_bound(x0.view(), x1.view(), pair.t, pair.r)?;
        res.record(s, rep.lhs - rep.rhs, true);
    }
    Ok(res)
}

/// Discrete action bound over uniform grids; value is `action − bound`.
pub fn action_bounds(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut res = PropertyResult::new("action bound violation (action - bound)", 1e-9);
    for i in 0..instances as u64 {
        let s = seed.wrapping_add(i);
        let mut rng = seeded_rng(s);
        let n = rng.random_range(2..=48);
        let (x0, x1) = random_endpoints(&mut rng, n);
        let grid = TimeGrid::uniform([1, 2, 4, 8][rng.random_range(0..4)])?;
        let rep = check_action_bound(x0.view(), x1.view(), &grid)?;
        res.record(s, rep.lhs - rep.rhs, true);
    }
    Ok(res)
}

fn random_marginal(rng: &mut SeededRng, n: usize) -> ndarray::Array1<f64> {
    let w: ndarray::Array1<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total = w.sum();
    w / total
}

pub fn sinkhorn_checks(seed: u64, instances: usize) -> Result<Vec<PropertyResult>> {
    let mut conv = PropertyResult::new("64x64 marginal error after 200 half-steps", 1e-6);
    let mut softmax = PropertyResult::new("one half-step weights differ from row softmax", 0.0);
    let mut monotone = PropertyResult::new("marginal error increase over 1/5/25/125 half-steps", 0.0);
    for i in 0..instances as u64 {
        let s = seed.wrapping_add(i);
        let mut rng = seeded_rng(s);
        let x = normal_array(&mut rng, (64, 2), 1.0);
        let y = normal_array(&mut rng, (64, 2), 1.0) + 0.3;
        let tau = log_uniform(&mut rng, 0.5, 2.0);
        let logits = gibbs_logits(pairwise_cost(x.view(), y.view(), Default::default())?.view(), tau);
        let (a, b) = if rng.random_bool(0.5) {
            (uniform_marginal(64), uniform_marginal(64))
        } else {
            (random_marginal(&mut rng, 64), random_marginal(&mut rng, 64))
        };
        let plan = sinkhorn_from_logits(logits.view(), a.view(), b.view(), 200)?;
        conv.record(s, plan.marginal_err(), false);

        let one = sinkhorn_from_logits(logits.view(), a.view(), b.view(), 1)?;
        let same = one.row_weights(logits.view()) == row_softmax(logits.view());
        softmax.record(s, if same { 0.0 } else { 1.0 }, true);

        let mut prev = f64::INFINITY;
        let mut increase = 0.0_f64;
        for iters in [1, 5, 25, 125] {
            let err = sinkhorn_from_logits(logits.view(), a.view(), b.view(), iters)?.marginal_err();
            increase = increase.max(err - prev);
            prev = err;
        }
        monotone.record(s, increase, true);
    }
    Ok(vec![conv, softmax, monotone])
}

/// Offsets `h` at which the learned mean velocity is compared with the
/// instantaneous velocity.
pub const LIMIT_OFFSETS: [f64; 3] = [0.2, 0.1, 0.05];

/// Training setup of the Gaussian task: `N(0, I) → N(0, σ₁² I)`.
pub fn gaussian_task_config(seed: u64, steps: usize) -> (TrainConfig, SourceSpec, DatasetSpec) {
    let cfg = TrainConfig {
        steps,
        seed,
        ..TrainConfig::default()
    };
    let source = SourceSpec::gaussian(1.0).expect("positive std");
    let target = DatasetSpec::new(DatasetName::GaussianIso).with_scale(2.0);
    (cfg, source, target)
}

/// 8×8 lattice over `±1.5 s(t)` at `t ∈ {0.1, 0.3, 0.5, 0.7}`: 256 test points.
pub fn limit_test_points(spec: &GaussianTaskSpec) -> Vec<(f64, Array2<f64>)> {
    [0.1, 0.3, 0.5, 0.7]
        .into_iter()
        .map(|t| {
            let half = 1.5 * spec.marginal_std(t);
            let coord = |k: usize| -half + 2.0 * half * k as f64 / 7.0;
            (t, Array2::from_shape_fn((64, 2), |(i, c)| coord(if c == 0 { i % 8 } else { i / 8 })))
        })
        .collect()
}

/// Mean `‖u(x, t, t + h) − v(x, t)‖` over the test points, per offset.
pub fn limit_errors(net: &TransportNet, spec: &GaussianTaskSpec) -> Result<Vec<f64>> {
    let points = limit_test_points(spec);
    let total: usize = points.iter().map(|(_, x)| x.nrows()).sum();
    LIMIT_OFFSETS
        .iter()
        .map(|&h| {
            let mut sum = 0.0;
            for (t, x) in &points {
                let u = crate::netcore::forward(net, x.view(), *t, t + h)?;
                let c = spec.velocity_coeff(*t);
                for (ur, xr) in u.rows().into_iter().zip(x.rows()) {
                    let dx = ur[0] - c * xr[0];
                    let dy = ur[1] - c * xr[1];
                    sum += (dx * dx + dy * dy).sqrt();
                }
            }
            Ok(sum / total as f64)
        })
        .collect()
}

/// Errors must shrink with `h` and drop by at least 20% from the largest
/// to the smallest offset.
pub fn limit_properties(errors: &[f64], seed: u64) -> Vec<PropertyResult> {
    let mut mono = PropertyResult::new("error increase as h shrinks (0.2 -> 0.1 -> 0.05)", 0.0);
    let increase = errors.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    mono.record(seed, increase, true);
    let mut drop = PropertyResult::new("error ratio h=0.05 / h=0.2", 0.8);
    drop.record(seed, errors[errors.len() - 1] / errors[0], true);
    vec![mono, drop]
}

pub fn infinitesimal_limit(seed: u64, steps: usize) -> Result<Vec<PropertyResult>> {
    let (cfg, source, target) = gaussian_task_config(seed, steps);
    let out = train(&cfg, &source, &target)?;
    let spec = GaussianTaskSpec::new(2.0, 2)?;
    let errors = limit_errors(&out.checkpoint.net, &spec)?;
    Ok(limit_properties(&errors, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert!(Suite::parse("nope").is_err());
    }

    #[test]
    fn small_suites_pass() {
        assert!(drift_equilibrium(0, 20).unwrap().passed());
        assert!(network_gradient(0, 5).unwrap().passed());
        assert!(particle_gradient(0, 5).unwrap().passed());
        assert!(w2_interval_bounds(0, 10).unwrap().passed());
        assert!(action_bounds(0, 10).unwrap().passed());
        assert!(sinkhorn_checks(0, 2).unwrap().iter().all(PropertyResult::passed));
    }

    #[test]
    fn failures_keep_first_seed() {
        let mut p = PropertyResult::new("x", 1.0);
        p.record(3, 0.5, false);
        p.record(4, 2.0, false);
        p.record(5, 3.0, false);
        assert_eq!((p.failures, p.first_failing_seed, p.worst), (2, Some(4), 3.0));
        assert!(!p.passed());
    }

    #[test]
    fn limit_property_logic() {
        assert!(limit_properties(&[1.0, 0.8, 0.5], 0).iter().all(PropertyResult::passed));
        assert!(!limit_properties(&[1.0, 1.1, 0.5], 0)[0].passed());
        assert!(!limit_properties(&[1.0, 0.9, 0.85], 0)[1].passed());
    }

    #[test]
    fn test_grid_has_256_points() {
        let spec = GaussianTaskSpec::new(2.0, 2).unwrap();
        let pts = limit_test_points(&spec);
        assert_eq!(pts.iter().map(|(_, x)| x.nrows()).sum::<usize>(), 256);
    }
}
