//! Finite-memory models on a four-step process whose environment is reset
//! every two steps: order 2 is exact, order 1 is not.

use ptt::channels::Povm;
use ptt::control::{random_unitary_sequence, trace_distance};
use ptt::markov_order::{
    cmo_apply, cmo_apply_instrumented, cmo_basis, fit_cmo, generate_cmo_datasets, order_two_fixture, plan_cmo_experiments,
    FitStart,
};
use ptt::mle::MleConfig;

fn main() -> ptt::Result<()> {
    let process = order_two_fixture(13)?;
    let basis = cmo_basis()?;
    let povm = Povm::pauli6();
    for order in [1, 2] {
        let plan = plan_cmo_experiments(4, order, basis.len(), 3, 0)?;
        let data = generate_cmo_datasets(&process, &plan, &basis, &povm, None, 2)?;
        let fit = fit_cmo(&data, &basis, &povm, 4, order, 0, &MleConfig::default(), FitStart::CompletedLinearInversion)?;
        let worst = (0..50)
            .map(|i| {
                let seq = random_unitary_sequence(4, 7, i);
                Ok(trace_distance(&cmo_apply(&fit.model, &seq)?, &process.exact_output(&seq)?))
            })
            .collect::<ptt::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let largest = cmo_apply_instrumented(&fit.model, &random_unitary_sequence(4, 7, 0))?.max_intermediate_dim;
        println!(
            "order {order}: {} circuits, {} blocks, worst trace distance {worst:.2e}, largest intermediate {largest}",
            plan.total_circuits,
            fit.model.blocks.len()
        );
    }
    Ok(())
}
