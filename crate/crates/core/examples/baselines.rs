//! Flow matching (many Euler steps) and the one-step drift model against
//! the two-time transport net, all on two moons with the same budget.
//!
//! ```text
//! cargo run --release --example baselines -- [steps]
//! ```

use driftflow::evalkit::emd_to_target;
use driftflow::sampler::{generate, TimeGrid};
use driftflow::synthdata::{sample_source, sample_target, DatasetName, DatasetSpec, SourceSpec};
use driftflow::trainer::{train, Method, TrainConfig};

fn main() -> driftflow::Result<()> {
    let steps = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("steps must be an integer"));
    let source = SourceSpec::default();
    let target = DatasetSpec::new(DatasetName::TwoMoons);
    let x0 = sample_source(&source, 512, 7);
    let reference = sample_target(&target, 512, 8);
    println!("source EMD {:.4}", emd_to_target(&x0, &reference, None)?);

    for method in [Method::Dfm, Method::FlowMatching, Method::DriftModel] {
        let cfg = TrainConfig {
            method,
            steps,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &source, &target)?;
        let mut line = format!("{method:?} ({:.0}s):", out.report.wall_time_secs);
        for nfe in [1, 5, 50] {
            let gen = generate(&out.checkpoint.net, &x0, &TimeGrid::uniform(nfe)?, false, None)?;
            line += &format!(" NFE {nfe} {:.4}", emd_to_target(&gen.output, &reference, None)?);
        }
        println!("{line}");
    }
    Ok(())
}
