//! On the Gaussian task the exact velocity and mean velocity are known in
//! closed form. Train on it and compare `u(x, t, t + h)` against both.
//!
//! ```text
//! cargo run --release --example gaussian_limit -- [steps]
//! ```

use driftflow::evalkit::GaussianTaskSpec;
use driftflow::netcore::forward;
use driftflow::trainer::train;
use driftflow::verify::{gaussian_task_config, limit_errors, limit_test_points, LIMIT_OFFSETS};

fn main() -> driftflow::Result<()> {
    let steps = std::env::args().nth(1).map_or(5000, |s| s.parse().expect("steps must be an integer"));
    let (cfg, source, target) = gaussian_task_config(1, steps);
    let out = train(&cfg, &source, &target)?;
    let spec = GaussianTaskSpec::new(2.0, 2)?;

    let errors = limit_errors(&out.checkpoint.net, &spec)?;
    for (h, e) in LIMIT_OFFSETS.iter().zip(&errors) {
        println!("h = {h:<4}: mean |u - v| = {e:.4}");
    }
    println!("ratio h=0.05 / h=0.2: {:.3}", errors[2] / errors[0]);

    // least-squares radial coefficient of u per test time
    for (t, x) in limit_test_points(&spec) {
        let den: f64 = x.iter().map(|v| v * v).sum();
        let mut line = format!("t = {t}: v coeff {:+.3}", spec.velocity_coeff(t));
        for h in LIMIT_OFFSETS {
            let u = forward(&out.checkpoint.net, x.view(), t, t + h)?;
            let fit = u.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() / den;
            line += &format!(" | h {h}: net {fit:+.3}, exact {:+.3}", spec.mean_velocity_coeff(t, t + h));
        }
        println!("{line}");
    }
    Ok(())
}
