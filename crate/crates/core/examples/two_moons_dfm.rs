//! Train a two-time transport net on two moons and watch sample quality as
//! the number of inference steps grows.
//!
//! ```text
//! cargo run --release --example two_moons_dfm -- [steps] [svg path]
//! ```

use driftflow::evalkit::emd_to_target;
use driftflow::sampler::{generate, TimeGrid};
use driftflow::svg::{write_scatter, Layer, GENERATED_COLOR, SOURCE_COLOR};
use driftflow::synthdata::{sample_source, sample_target, DatasetName, DatasetSpec, SourceSpec};
use driftflow::trainer::{train, TrainConfig};

fn main() -> driftflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(3000, |s| s.parse().expect("steps must be an integer"));
    let svg_path = args.next();

    let source = SourceSpec::default();
    let target = DatasetSpec::new(DatasetName::TwoMoons);
    let cfg = TrainConfig {
        steps,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &source, &target)?;
    let losses = &out.report.losses;
    println!(
        "{steps} steps in {:.1}s, loss {:.4} -> {:.4}",
        out.report.wall_time_secs,
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );

    let x0 = sample_source(&source, 512, 7);
    let reference = sample_target(&target, 512, 8);
    println!("source EMD {:.4}", emd_to_target(&x0, &reference, None)?);
    let mut one_step = None;
    for nfe in [1, 2, 5, 10, 20] {
        let gen = generate(&out.checkpoint.net, &x0, &TimeGrid::uniform(nfe)?, false, None)?;
        println!("NFE {nfe:>2}: EMD {:.4}", emd_to_target(&gen.output, &reference, None)?);
        if nfe == 1 {
            one_step = Some(gen.output);
        }
    }

    if let (Some(path), Some(gen)) = (svg_path, one_step) {
        write_scatter(
            path.as_ref(),
            &[
                Layer { points: x0.data(), color: SOURCE_COLOR, label: "source" },
                Layer { points: gen.data(), color: GENERATED_COLOR, label: "one step" },
            ],
        )?;
        println!("wrote {path}");
    }
    Ok(())
}
