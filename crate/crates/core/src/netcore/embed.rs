use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which scalars of the time pair are fed to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    /// `(t, r)`
    TR,
    /// `(t, t − r)`
    #[default]
    TDt,
    /// `(t, r, t − r)`
    TRDt,
}

impl EmbedMode {
    pub fn scalar_count(self) -> usize {
        match self {
            EmbedMode::TR | EmbedMode::TDt => 2,
            EmbedMode::TRDt => 3,
        }
    }

    fn scalars(self, t: f64, r: f64) -> ([f64; 3], usize) {
        match self {
            EmbedMode::TR => ([t, r, 0.0], 2),
            EmbedMode::TDt => ([t, t - r, 0.0], 2),
            EmbedMode::TRDt => ([t, r, t - r], 3),
        }
    }
}

/// Sinusoidal features `sin(2π f 2^k s)`, `cos(2π f 2^k s)` for
/// `k = 0..fourier_features` of every embedded scalar `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeEmbedSpec {
    #[serde(default)]
    pub mode: EmbedMode,
    pub fourier_features: usize,
    pub base_freq: f64,
}

impl Default for TimeEmbedSpec {
    fn default() -> Self {
        Self {
            mode: EmbedMode::TDt,
            fourier_features: 4,
            base_freq: 0.5,
        }
    }
}

impl TimeEmbedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fourier_features == 0 {
            return Err(invalid("fourier_features must be at least 1"));
        }
        if !(self.base_freq > 0.0 && self.base_freq.is_finite()) {
            return Err(invalid(format!("base_freq must be positive, got {}", self.base_freq)));
        }
        Ok(())
    }

    /// Features per embedded scalar.
    pub fn block_len(&self) -> usize {
        2 * self.fourier_features
    }

    pub fn len(&self) -> usize {
        self.mode.scalar_count() * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the embedding of `(t, r)` into `out` (length [`Self::len`]).
    pub fn embed_into(&self, t: f64, r: f64, out: &mut [f64]) {
        let (scalars, count) = self.mode.scalars(t, r);
        let f = self.fourier_features;
        for (block, &s) in out.chunks_exact_mut(2 * f).zip(&scalars[..count]) {
            let mut freq = std::f64::consts::TAU * self.base_freq;
            for k in 0..f {
                let (sin, cos) = (freq * s).sin_cos();
                block[k] = sin;
                block[f + k] = cos;
                freq *= 2.0;
            }
        }
    }
}

pub fn embed_time(t: f64, r: f64, spec: &TimeEmbedSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.len()];
    spec.embed_into(t, r, &mut out);
    out
}
