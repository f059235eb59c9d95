//! Circuit counts for memory-block characterization.

use ptt::markov_order::plan_cmo_experiments;

fn main() -> ptt::Result<()> {
    for (k, l) in [(3, 3), (5, 3), (5, 1)] {
        let plan = plan_cmo_experiments(k, l, 10, 3, 0)?;
        println!("k={k} l={l}: {} blocks, {} circuits", plan.blocks.len(), plan.total_circuits);
    }
    let plan = plan_cmo_experiments(3, 2, 10, 3, 0)?;
    for circuit in plan.circuits().take(4) {
        println!("{circuit:?}");
    }
    Ok(())
}
