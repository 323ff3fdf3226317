//! Drift flow matching on 2-D synthetic data.
//!
//! A two-time transport network `u(x_t, t, r)` maps samples of the marginal
//! at time `t` to the marginal at time `r` via `x_t + (r - t) u`. It is trained
//! by regressing its outputs onto `x̂_r + V`, where `V` is a kernel drift
//! field estimated separately inside each sampled time-pair group. Sampling
//! iterates the learned map over a uniform time grid, so the same network
//! serves one-step and many-step generation.
//!
//! Module map:
//!
//! - [`synthdata`]: source and target distributions.
//! - [`timepath`]: interpolation schedule, time pairs, grouped batches.
//! - [`kernelops`]: costs, Gibbs logits, softmax, log-domain Sinkhorn.
//! - [`driftfield`]: grouped drift `V = V⁺ − V⁻`.
//! - [`netcore`]: the MLP, its time embedding, manual backprop, Adam, checkpoints.
//! - [`trainer`]: DFM, flow matching and one-step drift training loops.
//! - [`sampler`]: multi-step inference.
//! - [`evalkit`]: exact W₂, transport bound checks, Gaussian velocity oracle.
//! - [`verify`]: property suites shared by the CLI and the test harness.
//! - [`cli`]: the `train` / `sample` / `eval` / `verify` commands.

pub mod cli;
pub mod driftfield;
pub mod error;
pub mod evalkit;
pub mod io;
pub mod kernelops;
pub mod netcore;
pub mod sampler;
pub mod svg;
pub mod synthdata;
pub mod timepath;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream of the same seed, for a separate purpose.
pub fn seeded_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Worker count from `DRIFTFLOW_THREADS` (default 1).
pub fn configured_threads() -> usize {
    std::env::var("DRIFTFLOW_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}
