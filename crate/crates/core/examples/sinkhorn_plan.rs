//! Log-domain Sinkhorn on a random 64×64 problem: marginal error against
//! the number of half-steps, and the one half-step special case.

use driftflow::kernelops::{
    gibbs_logits, pairwise_cost, row_softmax, sinkhorn_from_logits, uniform_marginal, CostKind,
};
use driftflow::synthdata::{sample_source, SourceSpec};

fn main() -> driftflow::Result<()> {
    let x = sample_source(&SourceSpec::gaussian(1.0)?, 64, 11).into_data();
    let y = sample_source(&SourceSpec::circle(1.5)?, 64, 12).into_data();
    let costs = pairwise_cost(x.view(), y.view(), CostKind::SqEuclidHalf)?;
    let logits = gibbs_logits(costs.view(), 0.5);
    let a = uniform_marginal(64);

    for iters in [1, 2, 5, 25, 100, 200] {
        let plan = sinkhorn_from_logits(logits.view(), a.view(), a.view(), iters)?;
        println!(
            "{iters:>3} half-steps: row err {:.2e}, col err {:.2e}",
            plan.row_marginal_err, plan.col_marginal_err
        );
    }

    let plan = sinkhorn_from_logits(logits.view(), a.view(), a.view(), 1)?;
    let same = plan.row_weights(logits.view()) == row_softmax(logits.view());
    println!("one half-step weights equal row softmax: {same}");
    Ok(())
}
