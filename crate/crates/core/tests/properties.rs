//! Randomized invariants across modules.

use proptest::prelude::*;
use ptt::algebra::{
    c, devectorize, frobenius, hermitian_eig, identity, partial_trace, pauli_coefficients, trace,
    vectorize, CMat, PauliString,
};
use ptt::basis_design::{hs_overlap, muub_objective, random_basis, reference_muub, superoperator};
use ptt::channels::{choi_to_ptm, dual_frame, qst_linear_inversion, ChannelChoi, InstrumentBasis, Povm};
use ptt::control::random_unitary_sequence;
use ptt::io::{BasisSpec, DatasetFile, Model, ModelFile, Provenance};
use ptt::mle::{exact_data, predicted_probabilities};
use ptt::process_tensor::{causality_constraints, pt_apply, ControlSequence, ProcessChoi};
use ptt::projection::{conic_project, project_psd, ConicProblem};
use ptt::random::{haar_unitary, random_density, random_hermitian, random_kraus, random_matrix, substream};
use ptt::simulator::{ground_truth_process_tensor, inject_gate_noise, SeProcess};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn random_channel(seed: u64, index: u64) -> ChannelChoi {
    ChannelChoi::from_kraus(&random_kraus(&mut substream(seed, index), 2, 2)).unwrap()
}

fn combination(basis: &InstrumentBasis, coeffs: &[f64]) -> CMat {
    coeffs.iter().enumerate().fold(CMat::zeros(4, 4), |acc, (i, &a)| acc + basis.choi(i) * c(a, 0.0))
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn vectorize_round_trip(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let m = random_matrix(&mut substream(seed, 0), rows, cols);
        prop_assert_eq!(devectorize(&vectorize(&m), rows, cols).unwrap(), m);
    }

    #[test]
    fn partial_trace_preserves_trace(seed in any::<u64>(), mask in 0u8..8) {
        let m = random_matrix(&mut substream(seed, 0), 8, 8);
        let keep: Vec<bool> = (0..3).map(|b| mask & (1 << b) != 0).collect();
        let reduced = partial_trace(&m, &[2, 2, 2], &keep).unwrap();
        prop_assert!((trace(&reduced) - trace(&m)).norm() < 1e-12);
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..40) {
        let m = random_hermitian(&mut substream(seed, 0), n);
        let e = hermitian_eig(&m).unwrap();
        prop_assert!(frobenius(&(e.reconstruct() - &m)) / frobenius(&m) < 1e-10);
        prop_assert!(frobenius(&(e.vectors.adjoint() * &e.vectors - identity(n))) < 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pauli_strings_are_orthogonal(a in 0usize..64, b in 0usize..64) {
        let (pa, pb) = (PauliString::from_index(a, 3).matrix(), PauliString::from_index(b, 3).matrix());
        let expected = if a == b { 8.0 } else { 0.0 };
        prop_assert!(((pa * pb).trace() - c(expected, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn state_tomography_respects_born_rule(seed in any::<u64>()) {
        let povm = Povm::pauli6();
        let rho = random_density(&mut substream(seed, 0), 2, 2);
        let p = povm.probabilities(&rho);
        let est = qst_linear_inversion(&p, &povm).unwrap();
        for (pi, qi) in p.iter().zip(povm.probabilities(&est)) {
            prop_assert!((pi - qi).abs() < 1e-10);
        }
    }

    #[test]
    fn ptm_action_matches_channel(seed in any::<u64>()) {
        let ch = random_channel(seed, 0);
        let rho = random_density(&mut substream(seed, 1), 2, 2);
        let via_ptm = choi_to_ptm(&ch).unwrap().act(&pauli_coefficients(&rho, 1));
        let direct = pauli_coefficients(&ch.apply(&rho).unwrap(), 1);
        for (a, b) in via_ptm.iter().zip(&direct) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dual_frame_reconstructs_span(seed in any::<u64>(), size in 2usize..6) {
        let mut r = substream(seed, 0);
        let frame: Vec<CMat> = (0..size).map(|_| random_hermitian(&mut r, 2)).collect();
        let duals = dual_frame(&frame).unwrap();
        let coeffs: Vec<f64> = (0..size).map(|i| (i as f64 + 1.0) * 0.3 - 0.7).collect();
        let v = frame.iter().zip(&coeffs).fold(CMat::zeros(2, 2), |acc, (b, &a)| acc + b * c(a, 0.0));
        let back = frame.iter().zip(duals.coefficients(&v)).fold(CMat::zeros(2, 2), |acc, (b, a)| acc + b * a);
        prop_assert!(frobenius(&(back - v)) < 1e-9);
    }

    #[test]
    fn gate_noise_preserves_coefficients(seed in any::<u64>()) {
        let clean = reference_muub().instrument_basis().unwrap();
        let (before, after) = (random_channel(seed, 0), random_channel(seed, 1));
        let noisy = inject_gate_noise(&clean, &before, &after).unwrap();
        let u = ChannelChoi::from_unitary(&haar_unitary(&mut substream(seed, 2), 2));
        let dressed = before.then(&u).unwrap().then(&after).unwrap();
        let (a, b) = (clean.expansion(&u), noisy.expansion(&dressed));
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-9));
    }

    #[test]
    fn overlap_matches_superoperator_inner_product(seed in any::<u64>()) {
        let mut r = substream(seed, 0);
        let (u, v) = (haar_unitary(&mut r, 2), haar_unitary(&mut r, 2));
        let direct = (superoperator(&u).adjoint() * superoperator(&v)).trace().re / 4.0;
        prop_assert!((hs_overlap(&u, &v) - direct).abs() < 1e-10);
    }

    #[test]
    fn basis_objective_is_invariant(seed in any::<u64>(), phase in -3.0f64..3.0) {
        let us = random_basis(6, seed, 0).unitaries();
        let w = haar_unitary(&mut substream(seed, 1), 2);
        let rotated: Vec<CMat> = us.iter().map(|u| &w * u * c(phase.cos(), phase.sin())).collect();
        prop_assert!((muub_objective(&us) - muub_objective(&rotated)).abs() < 1e-9);
    }

    #[test]
    fn reference_basis_expands_unitary_channels(seed in any::<u64>()) {
        let basis = reference_muub().instrument_basis().unwrap();
        let target = ChannelChoi::from_unitary(&haar_unitary(&mut substream(seed, 0), 2));
        let rebuilt = basis.chois().iter().zip(basis.expansion(&target)).fold(CMat::zeros(4, 4), |acc, (b, a)| acc + b * a);
        prop_assert!(frobenius(&(rebuilt - target.unnormalized())) < 1e-8);
    }

    #[test]
    fn psd_projection_idempotent_and_nonexpansive(seed in any::<u64>()) {
        let mut r = substream(seed, 0);
        let (x, y) = (random_hermitian(&mut r, 8), random_hermitian(&mut r, 8));
        let px = project_psd(&x);
        prop_assert!(frobenius(&(project_psd(&px) - &px)) < 1e-10);
        prop_assert!(frobenius(&(px - project_psd(&y))) <= frobenius(&(x - y)) + 1e-12);
    }
}

proptest! {
    #![proptest_config(cfg(8))]

    #[test]
    fn conic_projection_is_feasible(seed in any::<u64>()) {
        let set = causality_constraints(1, 2).unwrap();
        let target = random_hermitian(&mut substream(seed, 0), 8);
        let rep = conic_project(&ConicProblem::new(target.clone(), &set));
        prop_assert!(rep.converged);
        prop_assert!(rep.min_eigenvalue >= -1e-8);
        prop_assert!(rep.final_constraint_residual <= 1e-7);
        prop_assert!(rep.duality_gap().unwrap().abs() <= 1e-5);
        prop_assert!(set.apply_complex(&target).iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn simulator_outputs_are_states(seed in any::<u64>(), steps in 1usize..4) {
        let p = SeProcess::random(steps, 2, seed).unwrap();
        let ops: Vec<ChannelChoi> = (0..steps as u64).map(|i| random_channel(seed, 10 + i)).collect();
        let rho = p.exact_output(&ControlSequence::new(ops)).unwrap();
        prop_assert!((trace(&rho).re - 1.0).abs() < 1e-10);
        prop_assert!(hermitian_eig(&rho).unwrap().values[0] >= -1e-10);
    }

    #[test]
    fn ground_truth_is_psd_causal_and_consistent(seed in any::<u64>()) {
        let p = SeProcess::random(2, 2, seed).unwrap();
        let ups = ground_truth_process_tensor(&p).unwrap();
        prop_assert!(ups.min_eigenvalue() >= -1e-10);
        prop_assert!(causality_constraints(2, 2).unwrap().residual_inf(ups.matrix()) < 1e-10);
        let seq = random_unitary_sequence(2, seed, 0);
        prop_assert!(frobenius(&(pt_apply(&ups, &seq).unwrap() - p.exact_output(&seq).unwrap())) < 1e-10);
    }

    #[test]
    fn process_action_is_multilinear(seed in any::<u64>()) {
        let ups = ground_truth_process_tensor(&SeProcess::random(2, 2, seed).unwrap()).unwrap();
        let basis = reference_muub().instrument_basis().unwrap();
        let mut r = substream(seed, 1);
        let coeffs: Vec<Vec<f64>> = (0..2).map(|_| (0..10).map(|_| ptt::random::normal(&mut r)).collect()).collect();
        let combined = ups.apply_chois(&[combination(&basis, &coeffs[0]), combination(&basis, &coeffs[1])]).unwrap();
        let mut summed = CMat::zeros(2, 2);
        for a in 0..10 {
            for b in 0..10 {
                let term = ups.apply_chois(&[basis.choi(a).clone(), basis.choi(b).clone()]).unwrap();
                summed += term * c(coeffs[0][a] * coeffs[1][b], 0.0);
            }
        }
        prop_assert!(frobenius(&(combined - summed)) < 1e-9);
    }

    #[test]
    fn probabilities_are_linear_in_the_process(seed in any::<u64>(), a in -2.0f64..2.0) {
        let b = 1.0 - a;
        let basis = reference_muub().instrument_basis().unwrap();
        let bases = vec![basis.clone(), basis];
        let povm = Povm::pauli6();
        let u1 = ground_truth_process_tensor(&SeProcess::random(2, 2, seed).unwrap()).unwrap();
        let u2 = ground_truth_process_tensor(&SeProcess::random(2, 2, seed ^ 1).unwrap()).unwrap();
        let mix = ProcessChoi::new(u1.matrix() * c(a, 0.0) + u2.matrix() * c(b, 0.0), 2, 2).unwrap();
        let p = predicted_probabilities(&mix, &bases, &povm).unwrap();
        let p1 = predicted_probabilities(&u1, &bases, &povm).unwrap();
        let p2 = predicted_probabilities(&u2, &bases, &povm).unwrap();
        for i in 0..p.len() {
            prop_assert!((p[i] - a * p1[i] - b * p2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn model_and_dataset_files_round_trip(seed in any::<u64>()) {
        let ups = ground_truth_process_tensor(&SeProcess::random(2, 2, seed).unwrap()).unwrap();
        let model = Model::Process(ups.clone());
        let text = ModelFile::new("mle", &model).unwrap().to_json().unwrap();
        let (_, back) = ModelFile::parse(&text).unwrap();
        prop_assert_eq!(back, model);
        let basis = reference_muub().instrument_basis().unwrap();
        let bases = vec![basis.clone(), basis];
        let povm = Povm::pauli6();
        let data = exact_data(&ups, &bases, &povm).unwrap();
        let prov = Provenance { process_sha256: "0".repeat(64), generator: "test".into() };
        let file = DatasetFile::from_tensors(2, vec![BasisSpec::reference(); 2], &povm, None, None, std::slice::from_ref(&data), seed, prov).unwrap();
        let loaded = DatasetFile::parse(&file.to_json().unwrap()).unwrap();
        prop_assert_eq!(loaded.tensors[0].counts(), data.counts());
    }
}

#[test]
fn unitary_channels_span_ten_dimensions() {
    assert_eq!(reference_muub().superoperator_rank(), 10);
    assert_eq!(reference_muub().instrument_basis().unwrap().rank(), 10);
}
