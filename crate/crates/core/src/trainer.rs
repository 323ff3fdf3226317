//! Training loops: drift flow matching, the flow matching baseline and the
//! one-step drift model baseline.

use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::driftfield::{drift_target, group_drift, grouped_drift, grouped_drift_par, DriftConfig, DriftOutput};
use crate::error::{invalid, Error, Result};
use crate::netcore::{
    AdamConfig, AdamState, Checkpoint, NetArch, NetInput, Parameterization, TimeEmbedSpec, TimeQuery,
    TransportNet,
};
use crate::synthdata::{
    sample_source_with, sample_target_for_labels, sample_target_with, DatasetSpec, PointBatch, SourceSpec,
};
use crate::timepath::{
    build_grouped_batch, sample_time_pairs_with, GroupedBatch, Schedule, TimePair, TimeSamplerSpec,
};
use crate::{configured_threads, seeded_stream, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Dfm,
    FlowMatching,
    DriftModel,
}

/// Network shape and head used for training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSettings {
    pub hidden: usize,
    #[serde(default)]
    pub embed: TimeEmbedSpec,
    #[serde(default)]
    pub parameterization: Parameterization,
}

impl Default for NetSettings {
    fn default() -> Self {
        Self {
            hidden: 256,
            embed: TimeEmbedSpec::default(),
            parameterization: Parameterization::MeanVelocity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Time-pair groups per step (`G`).
    pub groups: usize,
    /// Samples per group (`B`); a step uses `G·B` endpoint pairs.
    pub group_size: usize,
    pub steps: usize,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub time_sampler: TimeSamplerSpec,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub net: NetSettings,
    pub seed: u64,
    #[serde(default)]
    pub conditional: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Dfm,
            groups: 4,
            group_size: 64,
            steps: 10_000,
            drift: DriftConfig::default(),
            time_sampler: TimeSamplerSpec::default(),
            adam: AdamConfig::default(),
            net: NetSettings::default(),
            seed: 0,
            conditional: false,
        }
    }
}

impl TrainConfig {
    /// Effective `(G, B)`: the drift model always trains one group.
    pub fn grouping(&self) -> (usize, usize) {
        match self.method {
            Method::DriftModel => (1, self.groups * self.group_size),
            _ => (self.groups, self.group_size),
        }
    }

    pub fn validate(&self, target: &DatasetSpec) -> Result<()> {
        if self.groups == 0 || self.group_size == 0 {
            return Err(invalid("groups and group_size must be at least 1"));
        }
        self.drift.validate()?;
        self.time_sampler.validate()?;
        self.adam.validate()?;
        target.validate()?;
        if self.net.hidden == 0 {
            return Err(invalid("net.hidden must be positive"));
        }
        self.net.embed.validate()?;
        if self.method == Method::FlowMatching && self.net.parameterization == Parameterization::DirectState {
            return Err(invalid("flow matching needs the mean_velocity parameterization"));
        }
        if self.conditional {
            let k = target.class_count;
            if k == 0 {
                return Err(invalid("conditional training needs a dataset with class_count > 0"));
            }
            let (_, b) = self.grouping();
            if self.method != Method::FlowMatching && (b % k != 0 || b / k < 2) {
                return Err(invalid(format!(
                    "conditional drift needs group_size divisible by {k} with at least 2 samples per class"
                )));
            }
        }
        Ok(())
    }

    pub fn arch(&self, dim: usize, target: &DatasetSpec) -> NetArch {
        NetArch {
            dim,
            hidden: self.net.hidden,
            class_count: if self.conditional { target.class_count } else { 0 },
            embed: self.net.embed,
            parameterization: self.net.parameterization,
            time_query: match self.method {
                Method::FlowMatching => TimeQuery::Instant,
                _ => TimeQuery::Interval,
            },
        }
    }
}

/// Diagnostics of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Loss before the update: the mean of the group losses.
    pub loss: f64,
    pub group_losses: Vec<f64>,
    /// Mean `‖V‖` over all samples (mean regression residual for flow matching).
    pub mean_drift_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub drift_norms: Vec<f64>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            detail: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["step", "loss", "mean_drift_norm"]).map_err(csv_err)?;
        for (k, (loss, norm)) in self.losses.iter().zip(&self.drift_norms).enumerate() {
            w.write_record([k.to_string(), format!("{loss:.16e}"), format!("{norm:.16e}")])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

fn flatten(x: &Array3<f64>) -> Array2<f64> {
    let (g, b, d) = x.dim();
    x.to_shape((g * b, d)).expect("contiguous").to_owned()
}

fn regroup(x: Array2<f64>, g: usize, b: usize) -> Array3<f64> {
    let d = x.ncols();
    x.into_shape_with_order((g, b, d)).expect("row count is G·B")
}

fn row_times(pairs: &[TimePair], b: usize) -> Vec<TimePair> {
    pairs.iter().flat_map(|&p| std::iter::repeat_n(p, b)).collect()
}

/// Drift restricted to (group × class) cells: samples only see positives
/// and negatives that share their group and their label.
pub fn class_cell_drift(queries: &Array3<f64>, pos: &Array3<f64>, labels: &Array2<usize>, cfg: &DriftConfig) -> Result<DriftOutput> {
    let (g, b, d) = queries.dim();
    let mut v = Array3::zeros((g, b, d));
    let mut pos_plan_err = vec![0.0; g];
    let mut neg_plan_err = vec![0.0; g];
    for k in 0..g {
        let row_labels = labels.row(k);
        let mut classes: Vec<usize> = row_labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        for c in classes {
            let idx: Vec<usize> = (0..b).filter(|&i| row_labels[i] == c).collect();
            let q = queries.slice(s![k, .., ..]).select(Axis(0), &idx);
            let p = pos.slice(s![k, .., ..]).select(Axis(0), &idx);
            let (vc, pe, ne) = group_drift(q.view(), p.view(), q.view(), cfg)?;
            for (row, &i) in vc.rows().into_iter().zip(&idx) {
                v.slice_mut(s![k, i, ..]).assign(&row);
            }
            pos_plan_err[k] = f64::max(pos_plan_err[k], pe);
            neg_plan_err[k] = f64::max(neg_plan_err[k], ne);
        }
    }
    Ok(DriftOutput {
        v,
        pos_plan_err,
        neg_plan_err,
    })
}

fn divergence(opt: &AdamState, err: Error) -> Error {
    match err {
        Error::NonFinite(detail) => Error::Divergence {
            step: opt.step as usize,
            detail,
        },
        other => other,
    }
}

/// Computes the grouped drift targets for a transported batch.
fn grouped_targets(
    net: &TransportNet,
    x_hat: &Array3<f64>,
    batch: &GroupedBatch,
    drift: &DriftConfig,
    parallel: bool,
) -> Result<DriftOutput> {
    match (&batch.labels, net.arch().class_count > 0) {
        (Some(labels), true) => class_cell_drift(x_hat, &batch.x_r, labels, drift),
        _ if parallel => grouped_drift_par(x_hat.view(), batch.x_r.view(), x_hat.view(), drift),
        _ => grouped_drift(x_hat.view(), batch.x_r.view(), x_hat.view(), drift),
    }
}

fn dfm_step_impl(
    net: &mut TransportNet,
    opt: &mut AdamState,
    batch: &GroupedBatch,
    drift: &DriftConfig,
    parallel: bool,
) -> Result<StepOutcome> {
    let (g, b, _) = batch.x_t.dim();
    let x_t = flatten(&batch.x_t);
    let times = row_times(&batch.pairs, b);
    let labels: Option<Vec<usize>> = match (&batch.labels, net.arch().class_count > 0) {
        (Some(l), true) => Some(l.iter().copied().collect()),
        _ => None,
    };
    let input = NetInput {
        x: x_t.view(),
        times: &times,
        labels: labels.as_deref(),
    };
    let pass = net.transport_pass(&input).map_err(|e| divergence(opt, e))?;
    let x_hat = regroup(pass.moved.clone(), g, b);
    let v = grouped_targets(net, &x_hat, batch, drift, parallel).map_err(|e| divergence(opt, e))?;
    let target = drift_target(x_hat.view(), &v)?;

    let group_losses: Vec<f64> = (0..g)
        .map(|k| {
            let vk = v.v.slice(s![k, .., ..]);
            0.5 * vk.iter().map(|x| x * x).sum::<f64>() / b as f64
        })
        .collect();
    let loss = group_losses.iter().sum::<f64>() / g as f64;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: opt.step as usize,
            detail: format!("loss = {loss}"),
        });
    }
    let (_, grad) = net.transport_mse_backward(&pass, flatten(&target).view())?;
    opt.step(net.params_mut(), &grad)?;
    Ok(StepOutcome {
        loss,
        group_losses,
        mean_drift_norm: v.mean_norm(),
    })
}

/// One DFM update: transport every group, estimate the drift inside each
/// group, regress onto the stop-gradient target `x̂_r + V`.
pub fn dfm_step(
    net: &mut TransportNet,
    opt: &mut AdamState,
    batch: &GroupedBatch,
    drift: &DriftConfig,
) -> Result<StepOutcome> {
    dfm_step_impl(net, opt, batch, drift, false)
}

/// One flow matching update: regress `u(x_t, t, t)` onto `x1 − x0`.
pub fn fm_step(
    net: &mut TransportNet,
    opt: &mut AdamState,
    x0: &PointBatch,
    x1: &PointBatch,
    t: &[f64],
) -> Result<StepOutcome> {
    if x0.data().dim() != x1.data().dim() || t.len() != x0.len() {
        return Err(invalid("fm_step: x0, x1 and t must have matching lengths"));
    }
    let mut x_t = x0.data().to_owned();
    for ((mut row, b), &ti) in x_t.rows_mut().into_iter().zip(x1.data().rows()).zip(t) {
        row.zip_mut_with(&b, |a, &b| *a = (1.0 - ti) * *a + ti * b);
    }
    let velocity = &x1.data() - &x0.data();
    let times: Vec<TimePair> = t.iter().map(|&ti| TimePair { t: ti, r: ti }).collect();
    let labels = if net.arch().class_count > 0 { x1.labels() } else { None };
    let input = NetInput {
        x: x_t.view(),
        times: &times,
        labels,
    };
    let (head, cache) = net.forward_cached(&input).map_err(|e| divergence(opt, e))?;
    let n = x0.len() as f64;
    let resid = &head - &velocity;
    let loss = 0.5 * resid.iter().map(|v| v * v).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: opt.step as usize,
            detail: format!("loss = {loss}"),
        });
    }
    let mean_resid = resid.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / n;
    let grad = net.backward(&cache, (resid / n).view());
    opt.step(net.params_mut(), &grad)?;
    Ok(StepOutcome {
        loss,
        group_losses: vec![loss],
        mean_drift_norm: mean_resid,
    })
}

/// One-step drift model update: DFM on the single pair `(0, 1)`.
pub fn drift_model_step(
    net: &mut TransportNet,
    opt: &mut AdamState,
    x0: &PointBatch,
    x1: &PointBatch,
    drift: &DriftConfig,
) -> Result<StepOutcome> {
    let pair = TimePair { t: 0.0, r: 1.0 };
    let batch = build_grouped_batch(x0, x1, &[pair], x0.len(), Schedule::Linear)?;
    dfm_step(net, opt, &batch, drift)
}

// Independent generator streams, one per purpose.
const STREAM_INIT: u64 = 0;
const STREAM_SOURCE: u64 = 1;
const STREAM_TARGET: u64 = 2;
const STREAM_TIME: u64 = 3;

struct Streams {
    source: SeededRng,
    target: SeededRng,
    time: SeededRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            source: seeded_stream(seed, STREAM_SOURCE),
            target: seeded_stream(seed, STREAM_TARGET),
            time: seeded_stream(seed, STREAM_TIME),
        }
    }

    fn endpoints(
        &mut self,
        cfg: &TrainConfig,
        source: &SourceSpec,
        target: &DatasetSpec,
        groups: usize,
        group_size: usize,
    ) -> Result<(PointBatch, PointBatch)> {
        let n = groups * group_size;
        let x0 = sample_source_with(source, n, &mut self.source);
        let x1 = if cfg.conditional {
            // stratified: every group holds each class equally often
            let k = target.class_count;
            let labels: Vec<usize> = (0..n).map(|i| (i % group_size) % k).collect();
            sample_target_for_labels(target, &labels, &mut self.target)?
        } else {
            PointBatch::new(sample_target_with(target, n, &mut self.target).into_data())?
        };
        Ok((x0, x1))
    }
}

/// Fresh network and optimizer for a config.
pub fn init_model(cfg: &TrainConfig, target: &DatasetSpec) -> Result<(TransportNet, AdamState)> {
    let arch = cfg.arch(2, target);
    let net = TransportNet::init(arch, &mut seeded_stream(cfg.seed, STREAM_INIT))?;
    let opt = AdamState::new(cfg.adam, net.params().len());
    Ok((net, opt))
}

/// Runs `cfg.steps` updates with fresh endpoint and time draws per step.
pub fn train(cfg: &TrainConfig, source: &SourceSpec, target: &DatasetSpec) -> Result<TrainOutcome> {
    cfg.validate(target)?;
    source.validate()?;
    let threads = configured_threads();
    let pool = if threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| invalid(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let run = || train_loop(cfg, source, target, threads > 1);
    match pool {
        Some(p) => p.install(run),
        None => run(),
    }
}

fn train_loop(cfg: &TrainConfig, source: &SourceSpec, target: &DatasetSpec, parallel: bool) -> Result<TrainOutcome> {
    let started = Instant::now();
    let (mut net, mut opt) = init_model(cfg, target)?;
    let mut streams = Streams::new(cfg.seed);
    let (groups, group_size) = cfg.grouping();
    let mut report = TrainReport {
        losses: Vec::with_capacity(cfg.steps),
        drift_norms: Vec::with_capacity(cfg.steps),
        wall_time_secs: 0.0,
    };
    for step in 0..cfg.steps {
        opt.lr_scale = cfg.adam.schedule.factor(step, cfg.steps);
        let (x0, x1) = streams.endpoints(cfg, source, target, groups, group_size)?;
        let outcome = match cfg.method {
            Method::Dfm => {
                let pairs = sample_time_pairs_with(&cfg.time_sampler, groups, &mut streams.time);
                let batch = build_grouped_batch(&x0, &x1, &pairs, group_size, Schedule::Linear)?;
                dfm_step_impl(&mut net, &mut opt, &batch, &cfg.drift, parallel)?
            }
            Method::DriftModel => drift_model_step(&mut net, &mut opt, &x0, &x1, &cfg.drift)?,
            Method::FlowMatching => {
                let t: Vec<f64> = (0..x0.len()).map(|_| cfg.time_sampler.draw(&mut streams.time)).collect();
                fm_step(&mut net, &mut opt, &x0, &x1, &t)?
            }
        };
        report.losses.push(outcome.loss);
        report.drift_norms.push(outcome.mean_drift_norm);
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            net,
            step: cfg.steps as u64,
            source: Some(*source),
        },
        report,
    })
}
