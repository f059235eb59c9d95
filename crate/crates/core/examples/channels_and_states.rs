//! Channel representations and single-step tomography by linear inversion.

use ptt::algebra::{c, frobenius, ket_bra};
use ptt::channels::{choi_to_ptm, dual_frame, qpt_linear_inversion, qst_linear_inversion, ChannelChoi, Povm};
use ptt::random::{haar_unitary, rng};

fn main() -> ptt::Result<()> {
    let damping = ChannelChoi::amplitude_damping(0.3);
    println!("amplitude damping CP {} TP {}", damping.is_cp(1e-12), damping.is_tp(1e-12));
    println!("PTM:\n{}", choi_to_ptm(&damping)?.matrix());

    // State tomography with the six-outcome Pauli POVM.
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = ket_bra(&[c(h, 0.0), c(h, 0.0)]);
    let povm = Povm::pauli6();
    let rho = qst_linear_inversion(&povm.probabilities(&plus), &povm)?;
    println!("state tomography error {:.2e}", frobenius(&(rho - &plus)));

    // Process tomography: four informationally complete inputs and their duals.
    let inputs = [
        ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]),
        ket_bra(&[c(0.0, 0.0), c(1.0, 0.0)]),
        plus,
        ket_bra(&[c(h, 0.0), c(0.0, h)]),
    ];
    let duals = dual_frame(&inputs)?;
    let outputs: Vec<_> = inputs.iter().map(|s| damping.apply(s)).collect::<ptt::Result<_>>()?;
    let estimate = qpt_linear_inversion(&outputs, &duals)?;
    println!("process tomography error {:.2e}", frobenius(&(estimate.unnormalized() - damping.unnormalized())));

    let u = haar_unitary(&mut rng(1), 2);
    let composed = ChannelChoi::from_unitary(&u).then(&damping)?;
    println!("unitary then damping is CPTP: {}", composed.is_cp(1e-10) && composed.is_tp(1e-10));
    Ok(())
}
