//! Model-based gate optimization on a noisy three-step device.

use ptt::algebra::{c, ket_bra};
use ptt::basis_design::{reference_muub, UnitaryParams};
use ptt::channels::Povm;
use ptt::control::{mean_std, optimize_sequence, params_sequence, state_fidelity, unitary_to_params, OptimizerConfig};
use ptt::mle::linear_inversion_fit;
use ptt::random::{haar_unitary, substream};
use ptt::simulator::{generate_dataset, SeProcess};

fn main() -> ptt::Result<()> {
    let device = SeProcess::noisy_device(3, 3)?;
    let basis = reference_muub().instrument_basis()?;
    let bases = vec![basis.clone(), basis.clone(), basis];
    let povm = Povm::pauli6();
    let model = linear_inversion_fit(&generate_dataset(&device, &bases, &povm, None, 0)?.data, &bases, &povm)?;
    let zero = ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]);
    let (mut naive_f, mut opt_f) = (vec![], vec![]);
    for i in 0..10u64 {
        let v = haar_unitary(&mut substream(77, i), 2);
        let target = &v * &zero * v.adjoint();
        let rest = UnitaryParams::new(0.0, 0.0, 0.0);
        let naive = vec![rest, rest, unitary_to_params(&v)];
        let opt = optimize_sequence(&model, &target, &naive, &OptimizerConfig { restarts: 4, seed: i, ..Default::default() })?;
        naive_f.push(state_fidelity(&target, &device.exact_output(&params_sequence(&naive))?)?);
        opt_f.push(state_fidelity(&target, &device.exact_output(&opt.sequence())?)?);
        println!("target {i}: naive {:.4} optimized {:.4}", naive_f[i as usize], opt_f[i as usize]);
    }
    println!("naive mean/std {:?}\noptimized mean/std {:?}", mean_std(&naive_f), mean_std(&opt_f));
    Ok(())
}
