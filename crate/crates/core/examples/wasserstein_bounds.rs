//! Exact W₂ between point clouds and the two transport bounds on the
//! straight-line interpolation path.

use driftflow::evalkit::{check_action_bound, check_w2_interval_bound, exact_w2};
use driftflow::sampler::TimeGrid;
use driftflow::synthdata::{sample_source, sample_target, DatasetName, DatasetSpec, SourceSpec};

fn main() -> driftflow::Result<()> {
    let x0 = sample_source(&SourceSpec::default(), 128, 21).into_data();
    let x1 = sample_target(&DatasetSpec::new(DatasetName::Checkerboard), 128, 22).into_data();

    let w2 = exact_w2(x0.view(), x1.view())?;
    println!("W2^2(source, checkerboard) = {:.4} over {} points", w2.w2_squared, x0.nrows());

    for (t, r) in [(0.0, 1.0), (0.2, 0.5), (0.6, 0.65)] {
        let b = check_w2_interval_bound(x0.view(), x1.view(), t, r)?;
        println!("W2(p_{t}, p_{r}) = {:.4} <= {:.4}: {}", b.lhs, b.rhs, b.holds);
    }
    for nfe in [1, 2, 4, 8] {
        let b = check_action_bound(x0.view(), x1.view(), &TimeGrid::uniform(nfe)?)?;
        println!("{nfe} intervals: action {:.4} <= {:.4}: {}", b.lhs, b.rhs, b.holds);
    }
    Ok(())
}
