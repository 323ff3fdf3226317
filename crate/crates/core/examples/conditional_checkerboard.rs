//! Class-conditional generation: four checkerboard classes, each sample
//! only drifts toward data of its own class.
//!
//! ```text
//! cargo run --release --example conditional_checkerboard -- [steps] [svg path]
//! ```

use driftflow::evalkit::emd_to_target;
use driftflow::sampler::{generate, TimeGrid};
use driftflow::svg::{write_scatter, Layer};
use driftflow::synthdata::{sample_source, sample_target_for_labels, DatasetName, DatasetSpec, SourceSpec};
use driftflow::trainer::{train, TrainConfig};

const COLORS: [&str; 4] = ["#1f5fbf", "#d1342f", "#2a9d4b", "#9b59b6"];

fn main() -> driftflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(4000, |s| s.parse().expect("steps must be an integer"));
    let svg_path = args.next();

    let source = SourceSpec::default();
    let target = DatasetSpec::new(DatasetName::Checkerboard).with_classes(4);
    let cfg = TrainConfig {
        steps,
        seed: 1,
        conditional: true,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &source, &target)?;

    let n = 512;
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let x0 = sample_source(&source, n, 7);
    let reference = sample_target_for_labels(&target, &labels, &mut driftflow::seeded_rng(8))?;
    let mut one_step = None;
    for nfe in [1, 10] {
        let gen = generate(&out.checkpoint.net, &x0, &TimeGrid::uniform(nfe)?, false, Some(&labels))?;
        let mut on_board = 0;
        let mut on_class = 0;
        for (p, &l) in gen.output.data().rows().into_iter().zip(&labels) {
            let p = p.as_slice().expect("row");
            on_board += target.contains(p) as usize;
            on_class += (target.label_of(p) == Some(l)) as usize;
        }
        println!(
            "NFE {nfe:>2}: {on_board}/{n} on the board, {on_class}/{n} in their own class, per-class EMD {:.4}",
            emd_to_target(&gen.output, &reference, None)?
        );
        one_step.get_or_insert(gen.output);
    }
    let gen = one_step.expect("ran at least once");

    if let Some(path) = svg_path {
        let per_class: Vec<_> = (0..4)
            .map(|c| {
                let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                gen.select(&idx).into_data()
            })
            .collect();
        let names = ["class 0", "class 1", "class 2", "class 3"];
        let layers: Vec<Layer> = per_class
            .iter()
            .enumerate()
            .map(|(c, pts)| Layer { points: pts.view(), color: COLORS[c], label: names[c] })
            .collect();
        write_scatter(path.as_ref(), &layers)?;
        println!("wrote {path}");
    }
    Ok(())
}
