//! Two-step non-Markovian process: simulate, fit by linear inversion and by
//! maximum likelihood, and compare reconstruction fidelities.

use ptt::basis_design::reference_muub;
use ptt::channels::Povm;
use ptt::control::reconstruction_fidelity;
use ptt::mle::{linear_inversion_fit, pgdb_fit, MleConfig};
use ptt::process_tensor::{causality_constraints, temporal_qmi};
use ptt::simulator::{generate_dataset, ground_truth_process_tensor, SeProcess};

fn main() -> ptt::Result<()> {
    let process = SeProcess::random(2, 2, 11)?;
    let truth = ground_truth_process_tensor(&process)?;
    println!("ground truth: dim {}, temporal QMI {:?}", truth.dim(), temporal_qmi(&truth));

    let basis = reference_muub().instrument_basis()?;
    let bases = vec![basis.clone(), basis];
    let povm = Povm::pauli6();
    let constraints = causality_constraints(2, 2)?;
    let data = generate_dataset(&process, &bases, &povm, Some(1600), 3)?.data;

    let li = linear_inversion_fit(&data, &bases, &povm)?;
    let fit = pgdb_fit(&data, &bases, &povm, &constraints, &MleConfig::default())?;
    println!(
        "pgdb: {:?} after {} iterations, cost {:.3}, min eigenvalue {:.1e}",
        fit.status, fit.iterations, fit.cost, fit.min_eigenvalue
    );
    for (name, model) in [("linear inversion", &li), ("maximum likelihood", &fit.process)] {
        let r = reconstruction_fidelity(model, &process, 100, 9)?;
        println!("{name:>18}: median {:.5}, IQR {:.5}, min {:.5}", r.median, r.iqr(), r.min);
    }
    Ok(())
}
