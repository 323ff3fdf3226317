//! The transport network `u(x_t, t, r)`: a three-layer MLP with Fourier time
//! features, hand-written reverse mode for squared-error targets, and Adam.
//!
//! Parameters live in one flat vector. Each affine layer stores its weight
//! matrix `[fan_in, fan_out]` row-major followed by its bias, so a batch
//! forward pass is `X · W + b`.

mod adam;
mod checkpoint;
mod embed;

pub use adam::{AdamConfig, AdamState, LrSchedule};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader};
pub use embed::{embed_time, EmbedMode, TimeEmbedSpec};

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::timepath::TimePair;

/// What the head of the network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Mean velocity `u`; the transport map is `x_t + (r − t) u`.
    #[default]
    MeanVelocity,
    /// The state `x_r` itself.
    DirectState,
}

/// How the sampler queries the network on a grid interval `[t_m, t_{m+1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeQuery {
    /// Two-time query `u(x, t_m, t_{m+1})`.
    #[default]
    Interval,
    /// Instantaneous query `v(x, t_m) = u(x, t_m, t_m)` (flow matching nets).
    Instant,
}

/// Architecture of a [`TransportNet`], everything except the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetArch {
    pub dim: usize,
    pub hidden: usize,
    #[serde(default)]
    pub class_count: usize,
    pub embed: TimeEmbedSpec,
    #[serde(default)]
    pub parameterization: Parameterization,
    #[serde(default)]
    pub time_query: TimeQuery,
}

impl NetArch {
    pub fn new(dim: usize, hidden: usize, embed: TimeEmbedSpec) -> Self {
        Self {
            dim,
            hidden,
            class_count: 0,
            embed,
            parameterization: Parameterization::MeanVelocity,
            time_query: TimeQuery::Interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(invalid("network dim and hidden width must be positive"));
        }
        if self.parameterization == Parameterization::DirectState && self.time_query == TimeQuery::Instant {
            return Err(invalid("instantaneous time queries need the mean-velocity head"));
        }
        self.embed.validate()
    }

    pub fn input_width(&self) -> usize {
        self.dim + self.embed.len() + self.class_count
    }

    /// `(fan_in, fan_out)` of the three affine layers.
    pub fn layer_shapes(&self) -> [(usize, usize); 3] {
        [
            (self.input_width(), self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, self.dim),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Per-row network inputs: states, time pairs and optional class labels.
#[derive(Debug, Clone, Copy)]
pub struct NetInput<'a> {
    pub x: ArrayView2<'a, f64>,
    pub times: &'a [TimePair],
    pub labels: Option<&'a [usize]>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre1: Array2<f64>,
    act1: Array2<f64>,
    pre2: Array2<f64>,
    act2: Array2<f64>,
}

/// Output of [`TransportNet::transport_pass`].
#[derive(Debug, Clone)]
pub struct TransportPass {
    /// Transported states `x̂_r`.
    pub moved: Array2<f64>,
    steps: Vec<f64>,
    cache: ForwardCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportNet {
    arch: NetArch,
    params: Vec<f64>,
}

fn silu(z: f64) -> f64 {
    z * crate::timepath::sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = crate::timepath::sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

impl TransportNet {
    /// Fan-in scaled uniform hidden layers, zero biases, zero output layer,
    /// so the fresh network predicts `u ≡ 0`.
    pub fn init<R: Rng + ?Sized>(arch: NetArch, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = Vec::with_capacity(arch.param_count());
        for (layer, (fan_in, fan_out)) in arch.layer_shapes().into_iter().enumerate() {
            let bound = if layer < 2 { 1.0 / (fan_in as f64).sqrt() } else { 0.0 };
            for _ in 0..fan_in * fan_out {
                params.push(if bound > 0.0 {
                    rng.random_range(-bound..bound)
                } else {
                    0.0
                });
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: NetArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let shapes = self.arch.layer_shapes();
        let offset: usize = shapes[..k].iter().map(|(i, o)| i * o + o).sum();
        let (fan_in, fan_out) = shapes[k];
        let w = &self.params[offset..offset + fan_in * fan_out];
        let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        (
            ArrayView2::from_shape((fan_in, fan_out), w).expect("layer layout"),
            ArrayView1::from(b),
        )
    }

    fn build_input(&self, input: &NetInput) -> Result<Array2<f64>> {
        let n = input.x.nrows();
        let arch = &self.arch;
        if input.x.ncols() != arch.dim {
            return Err(invalid(format!(
                "network expects dimension {}, got {}",
                arch.dim,
                input.x.ncols()
            )));
        }
        if input.times.len() != n {
            return Err(invalid(format!("{} time pairs for {n} rows", input.times.len())));
        }
        match (arch.class_count, input.labels) {
            (0, None) => {}
            (0, Some(_)) => return Err(invalid("labels given to an unconditional network")),
            (_, None) => return Err(invalid("conditional network needs labels")),
            (k, Some(l)) => {
                if l.len() != n {
                    return Err(invalid(format!("{} labels for {n} rows", l.len())));
                }
                if let Some(bad) = l.iter().find(|&&c| c >= k) {
                    return Err(invalid(format!("label {bad} out of range for {k} classes")));
                }
            }
        }
        if input.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let emb = arch.embed.len();
        let mut features = Array2::zeros((n, arch.input_width()));
        for (i, mut row) in features.rows_mut().into_iter().enumerate() {
            let row = row.as_slice_mut().expect("fresh array is contiguous");
            for (dst, &src) in row[..arch.dim].iter_mut().zip(input.x.row(i)) {
                *dst = src;
            }
            let pair = input.times[i];
            arch.embed
                .embed_into(pair.t, pair.r, &mut row[arch.dim..arch.dim + emb]);
            if let Some(l) = input.labels {
                row[arch.dim + emb + l[i]] = 1.0;
            }
        }
        Ok(features)
    }

    /// Raw head output for every row, plus the cache needed by [`Self::backward`].
    pub fn forward_cached(&self, input: &NetInput) -> Result<(Array2<f64>, ForwardCache)> {
        let features = self.build_input(input)?;
        let (w1, b1) = self.layer(0);
        let (w2, b2) = self.layer(1);
        let (w3, b3) = self.layer(2);
        let pre1 = features.dot(&w1) + b1;
        let act1 = pre1.mapv(silu);
        let pre2 = act1.dot(&w2) + b2;
        let act2 = pre2.mapv(silu);
        let out = act2.dot(&w3) + b3;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network activations".into()));
        }
        Ok((
            out,
            ForwardCache {
                input: features,
                pre1,
                act1,
                pre2,
                act2,
            },
        ))
    }

    /// Gradient of `Σ_ij d_out_ij · out_ij` with respect to the parameters.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let shapes = self.arch.layer_shapes();
        let mut offsets = [0usize; 3];
        for k in 1..3 {
            offsets[k] = offsets[k - 1] + shapes[k - 1].0 * shapes[k - 1].1 + shapes[k - 1].1;
        }
        let mut write = |k: usize, input: &Array2<f64>, delta: &Array2<f64>| {
            let (fan_in, fan_out) = shapes[k];
            let (w, b) = grad[offsets[k]..offsets[k] + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            let mut gw = ArrayViewMut2::from_shape((fan_in, fan_out), w).expect("layer layout");
            ndarray::linalg::general_mat_mul(1.0, &input.t(), delta, 0.0, &mut gw);
            ArrayViewMut1::from(b).assign(&delta.sum_axis(Axis(0)));
        };

        let (w2, _) = self.layer(1);
        let (w3, _) = self.layer(2);
        let d3 = d_out.to_owned();
        write(2, &cache.act2, &d3);
        let mut d2 = d3.dot(&w3.t());
        ndarray::Zip::from(&mut d2)
            .and(&cache.pre2)
            .for_each(|d, &z| *d *= silu_grad(z));
        write(1, &cache.act1, &d2);
        let mut d1 = d2.dot(&w2.t());
        ndarray::Zip::from(&mut d1)
            .and(&cache.pre1)
            .for_each(|d, &z| *d *= silu_grad(z));
        write(0, &cache.input, &d1);
        grad
    }

    /// Transport `x_t ↦ x̂_r` for every row, keeping what the backward pass needs.
    pub fn transport_pass(&self, input: &NetInput) -> Result<TransportPass> {
        check_order(input.times)?;
        let (head, cache) = self.forward_cached(input)?;
        let steps: Vec<f64> = input.times.iter().map(TimePair::step).collect();
        let moved = match self.arch.parameterization {
            Parameterization::MeanVelocity => {
                let mut moved = input.x.to_owned();
                for ((mut row, u), &h) in moved.rows_mut().into_iter().zip(head.rows()).zip(&steps) {
                    row.zip_mut_with(&u, |x, &u| *x += h * u);
                }
                moved
            }
            Parameterization::DirectState => head.clone(),
        };
        Ok(TransportPass {
            moved,
            steps,
            cache,
        })
    }

    pub fn transport_rows(&self, input: &NetInput) -> Result<Array2<f64>> {
        self.transport_pass(input).map(|p| p.moved)
    }

    /// Loss `(1/(2n)) Σ_i ‖x̂_i − target_i‖²` of a finished pass and its
    /// parameter gradient. The target is treated as a constant.
    pub fn transport_mse_backward(&self, pass: &TransportPass, target: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
        if target.dim() != pass.moved.dim() {
            return Err(invalid(format!(
                "target shape {:?} does not match batch {:?}",
                target.dim(),
                pass.moved.dim()
            )));
        }
        let n = pass.moved.nrows() as f64;
        let resid = &pass.moved - &target;
        let loss = 0.5 * resid.iter().map(|v| v * v).sum::<f64>() / n;
        let mut d_head = resid / n;
        if self.arch.parameterization == Parameterization::MeanVelocity {
            for (mut row, &h) in d_head.rows_mut().into_iter().zip(&pass.steps) {
                row *= h;
            }
        }
        Ok((loss, self.backward(&pass.cache, d_head.view())))
    }

    pub fn transport_mse_grad(&self, input: &NetInput, target: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
        let pass = self.transport_pass(input)?;
        self.transport_mse_backward(&pass, target)
    }

    /// Loss `(1/(2n)) Σ_i ‖head(x_i) − target_i‖²` on the raw head output and
    /// its gradient (flow matching regression).
    pub fn head_mse_grad(&self, input: &NetInput, target: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
        let (head, cache) = self.forward_cached(input)?;
        if target.dim() != head.dim() {
            return Err(invalid("target shape does not match batch"));
        }
        let n = head.nrows() as f64;
        let resid = &head - &target;
        let loss = 0.5 * resid.iter().map(|v| v * v).sum::<f64>() / n;
        let d_head = resid / n;
        Ok((loss, self.backward(&cache, d_head.view())))
    }
}

fn check_order(times: &[TimePair]) -> Result<()> {
    if let Some(p) = times.iter().find(|p| p.t > p.r) {
        return Err(invalid(format!("transport needs t <= r, got ({}, {})", p.t, p.r)));
    }
    Ok(())
}

fn uniform_times(n: usize, t: f64, r: f64) -> Vec<TimePair> {
    vec![TimePair { t, r }; n]
}

/// Head output: `u(x_t, t, r)` for the mean-velocity head, `x_r` otherwise.
pub fn forward(net: &TransportNet, x_t: ArrayView2<f64>, t: f64, r: f64) -> Result<Array2<f64>> {
    let times = uniform_times(x_t.nrows(), t, r);
    net.forward_cached(&NetInput { x: x_t, times: &times, labels: None })
        .map(|(out, _)| out)
}

/// `x_t + (r − t) u(x_t, t, r)`, or the direct state prediction.
pub fn transport(net: &TransportNet, x_t: ArrayView2<f64>, t: f64, r: f64) -> Result<Array2<f64>> {
    if t > r {
        return Err(invalid(format!("transport needs t <= r, got ({t}, {r})")));
    }
    let times = uniform_times(x_t.nrows(), t, r);
    net.transport_rows(&NetInput { x: x_t, times: &times, labels: None })
}

/// Gradient of `(1/(2B)) Σ_i ‖transport(x_i) − target_i‖²`; the target is a constant.
pub fn backward_mse(
    net: &TransportNet,
    x_t: ArrayView2<f64>,
    t: f64,
    r: f64,
    target: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    if t > r {
        return Err(invalid(format!("transport needs t <= r, got ({t}, {r})")));
    }
    let times = uniform_times(x_t.nrows(), t, r);
    net.transport_mse_grad(&NetInput { x: x_t, times: &times, labels: None }, target)
        .map(|(_, g)| g)
}

/// The loss whose gradient [`backward_mse`] returns.
pub fn mse_loss(
    net: &TransportNet,
    x_t: ArrayView2<f64>,
    t: f64,
    r: f64,
    target: ArrayView2<f64>,
) -> Result<f64> {
    let moved = transport(net, x_t, t, r)?;
    if moved.dim() != target.dim() {
        return Err(invalid("target shape does not match batch"));
    }
    let n = moved.nrows() as f64;
    Ok(0.5 * (&moved - &target).iter().map(|v| v * v).sum::<f64>() / n)
}
