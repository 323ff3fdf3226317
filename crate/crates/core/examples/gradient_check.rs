//! Runs the property suites that need no training: drift equilibrium,
//! finite-difference gradients, transport bounds and Sinkhorn checks.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed]
//! ```

use driftflow::verify::{run_suite, Suite, SuiteSizes};

fn main() -> driftflow::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let sizes = SuiteSizes {
        w2_instances: 200,
        action_instances: 200,
        ..SuiteSizes::default()
    };
    for suite in Suite::ALL.into_iter().filter(|&s| s != Suite::InfinitesimalLimit) {
        let report = run_suite(suite, seed, &sizes)?;
        print!("{report}");
    }
    Ok(())
}
