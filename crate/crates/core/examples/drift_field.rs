//! The grouped drift: zero when positives and negatives coincide, and
//! pointing from the generated cloud toward the data otherwise.

use driftflow::driftfield::{group_drift, DriftConfig};
use driftflow::synthdata::{sample_source, SourceSpec};
use ndarray::Axis;

fn main() -> driftflow::Result<()> {
    let cfg = DriftConfig::default();
    let cloud = sample_source(&SourceSpec::gaussian(1.0)?, 64, 3).into_data();

    let (v, _, _) = group_drift(cloud.view(), cloud.view(), cloud.view(), &cfg)?;
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    println!("pos = neg: max |V| = {max:.2e}");

    // generated samples sit at the origin, data is shifted by (2, 0)
    let shifted = &cloud + &ndarray::array![2.0, 0.0];
    let (v, pos_err, neg_err) = group_drift(cloud.view(), shifted.view(), cloud.view(), &cfg)?;
    let mean = v.mean_axis(Axis(0)).expect("non-empty");
    println!("shifted data: mean V = ({:.3}, {:.3})", mean[0], mean[1]);
    println!("plan marginal errors: pos {pos_err:.2e}, neg {neg_err:.2e}");

    let balanced = DriftConfig { sinkhorn_iters: 50, ..cfg };
    let (v, pos_err, _) = group_drift(cloud.view(), shifted.view(), cloud.view(), &balanced)?;
    let mean = v.mean_axis(Axis(0)).expect("non-empty");
    println!("50 sinkhorn half-steps: mean V = ({:.3}, {:.3}), pos err {pos_err:.2e}", mean[0], mean[1]);
    Ok(())
}
