//! System–environment simulator used as ground truth.
//!
//! A qubit system S is coupled to an environment E of dimension `d_e`.
//! Between consecutive control times the joint state evolves under a fixed
//! SE unitary; control operations act on S only.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::algebra::{c, identity, Pauli, kron, partial_trace, permute_legs, trace_trailing, CMat, C64, ZERO};
use crate::channels::{validate_state, ChannelChoi, InstrumentBasis, Povm};
use crate::error::{Error, Result};
use crate::mle::DataTensor;
use crate::process_tensor::{multi_index, ControlSequence, ProcessChoi};
use crate::random::{haar_unitary, substream};

/// Largest step count accepted by [`ground_truth_process_tensor`].
pub const MAX_GROUND_TRUTH_STEPS: usize = 4;

#[derive(Debug, Clone)]
pub struct Spam {
    /// Applied to the system before the first control operation.
    pub preparation: ChannelChoi,
    /// Applied to the system before every readout.
    pub measurement: ChannelChoi,
}

#[derive(Debug, Clone)]
pub struct SeProcess {
    system_dim: usize,
    env_dim: usize,
    initial_state: CMat,
    step_unitaries: Vec<CMat>,
    spam: Option<Spam>,
    env_reset_period: Option<usize>,
    env_initial: CMat,
    time_offset: usize,
    prepared: bool,
}

impl SeProcess {
    /// `step_unitaries[j]` acts on S⊗E between t_j and t_{j+1}.
    pub fn new(env_dim: usize, initial_state: CMat, step_unitaries: Vec<CMat>) -> Result<Self> {
        let system_dim = 2;
        let n = system_dim * env_dim;
        if env_dim == 0 || !env_dim.is_power_of_two() {
            return Err(Error::invalid("environment dimension must be a power of two"));
        }
        if initial_state.nrows() != n || !initial_state.is_square() {
            return Err(Error::dim(format!("initial state must be {n}x{n}")));
        }
        validate_state(&initial_state)?;
        if step_unitaries.is_empty() {
            return Err(Error::invalid("need at least one step"));
        }
        for (j, u) in step_unitaries.iter().enumerate() {
            if u.nrows() != n || !u.is_square() {
                return Err(Error::dim(format!("step unitary {j} must be {n}x{n}")));
            }
            let defect = crate::algebra::frobenius(&(u.adjoint() * u - identity(n)));
            if defect > 1e-10 {
                return Err(Error::invalid(format!("step unitary {j} is not unitary (defect {defect:.2e})")));
            }
        }
        let env_initial = partial_trace(&initial_state, &[system_dim, env_dim], &[false, true])?;
        Ok(SeProcess { system_dim, env_dim, initial_state, step_unitaries, spam: None, env_reset_period: None, env_initial, time_offset: 0, prepared: false })
    }

    /// Haar-random SE unitaries, system and environment start in |0⟩.
    pub fn random(steps: usize, env_dim: usize, seed: u64) -> Result<Self> {
        let n = 2 * env_dim;
        let mut r = substream(seed, 0);
        let us = (0..steps).map(|_| haar_unitary(&mut r, n)).collect();
        let mut rho = CMat::zeros(n, n);
        rho[(0, 0)] = c(1.0, 0.0);
        SeProcess::new(env_dim, rho, us)
    }

    /// Random SE dynamics with the environment refreshed at every step, so
    /// the induced process is Markovian but noisy.
    pub fn markovian(steps: usize, seed: u64) -> Result<Self> {
        Ok(SeProcess::random(steps, 2, seed)?.with_env_reset(1))
    }

    /// Weakly coupled device: every step applies a small coherent
    /// over-rotation of the system followed by a ZZ coupling to an
    /// environment qubit prepared in |+⟩; preparation is slightly
    /// depolarized and readout slightly damped.
    pub fn noisy_device(steps: usize, seed: u64) -> Result<Self> {
        let mut r = substream(seed, 0);
        let zz = zz_coupling(0.2);
        let us = (0..steps)
            .map(|_| {
                let n: Vec<f64> = (0..3).map(|_| crate::random::normal(&mut r)).collect();
                let norm = n.iter().map(|x| x * x).sum::<f64>().sqrt();
                let eps: f64 = 0.15;
                let mut rot = identity(2) * c(eps.cos(), 0.0);
                for (p, x) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().zip(&n) {
                    rot += p.matrix() * c(0.0, -eps.sin() * x / norm);
                }
                &zz * kron(&rot, &identity(2))
            })
            .collect();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = crate::algebra::ket_bra(&[c(h, 0.0), c(h, 0.0)]);
        let zero = crate::algebra::ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]);
        SeProcess::new(2, kron(&zero, &plus), us)?
            .with_spam(ChannelChoi::depolarizing(2, 0.02), ChannelChoi::amplitude_damping(0.03))
    }

    /// Closed system: every step is a system unitary.
    pub fn closed(initial: CMat, unitaries: Vec<CMat>) -> Result<Self> {
        SeProcess::new(1, initial, unitaries)
    }

    pub fn with_spam(mut self, preparation: ChannelChoi, measurement: ChannelChoi) -> Result<Self> {
        for ch in [&preparation, &measurement] {
            if ch.d_in() != 2 || ch.d_out() != 2 || !ch.is_cp(1e-9) || !ch.is_tp(1e-9) {
                return Err(Error::invalid("SPAM channels must be CPTP qubit channels"));
            }
        }
        self.spam = Some(Spam { preparation, measurement });
        Ok(self)
    }

    /// Resets E to its initial marginal at every t_j with j > 0 and j % period == 0.
    pub fn with_env_reset(mut self, period: usize) -> Self {
        self.env_reset_period = if period == 0 { None } else { Some(period) };
        self
    }

    pub fn steps(&self) -> usize {
        self.step_unitaries.len()
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn initial_state(&self) -> &CMat {
        &self.initial_state
    }

    pub fn step_unitaries(&self) -> &[CMat] {
        &self.step_unitaries
    }

    pub fn spam(&self) -> Option<&Spam> {
        self.spam.as_ref()
    }

    pub fn env_reset_period(&self) -> Option<usize> {
        self.env_reset_period
    }

    fn resets_at(&self, local: usize) -> bool {
        let j = local + self.time_offset;
        matches!(self.env_reset_period, Some(p) if j > 0 && j.is_multiple_of(p))
    }

    fn preparation(&self) -> Option<CMat> {
        match (&self.spam, self.prepared) {
            (Some(s), false) => Some(s.preparation.unnormalized()),
            _ => None,
        }
    }

    /// The `window`-step process starting at t_j, j = `prefix.len()`, with
    /// the joint state left behind by the prefix operations.
    pub fn conditioned(&self, prefix: &[CMat], window: usize) -> Result<SeProcess> {
        let j = prefix.len();
        if window == 0 || j + window > self.steps() {
            return Err(Error::dim(format!("window {j}..{} outside a {}-step process", j + window, self.steps())));
        }
        let (ds, de) = (self.system_dim, self.env_dim);
        let mut rho = self.initial_state.clone();
        if let Some(prep) = self.preparation() {
            rho = apply_on_leading(&prep, &rho, ds, de);
        }
        for (t, a) in prefix.iter().enumerate() {
            if self.resets_at(t) {
                rho = self.reset_env(&rho);
            }
            rho = apply_on_leading(a, &rho, ds, de);
            let u = &self.step_unitaries[t];
            rho = u * rho * u.adjoint();
        }
        Ok(SeProcess {
            initial_state: rho,
            step_unitaries: self.step_unitaries[j..j + window].to_vec(),
            time_offset: self.time_offset + j,
            prepared: true,
            ..self.clone()
        })
    }

    fn reset_env(&self, rho: &CMat) -> CMat {
        let sys = partial_trace(rho, &[self.system_dim, self.env_dim], &[true, false]).expect("shape");
        kron(&sys, &self.env_initial)
    }

    /// System state after the first `ops.len()` steps (unnormalized Chois),
    /// including readout noise.
    pub fn output_with(&self, ops: &[CMat]) -> Result<CMat> {
        if ops.is_empty() || ops.len() > self.steps() {
            return Err(Error::dim(format!("{} operations for a {}-step process", ops.len(), self.steps())));
        }
        let (ds, de) = (self.system_dim, self.env_dim);
        let mut rho = self.initial_state.clone();
        if let Some(prep) = self.preparation() {
            rho = apply_on_leading(&prep, &rho, ds, de);
        }
        for (j, a) in ops.iter().enumerate() {
            if a.nrows() != ds * ds {
                return Err(Error::dim("operation must act on the system"));
            }
            if self.resets_at(j) {
                rho = self.reset_env(&rho);
            }
            rho = apply_on_leading(a, &rho, ds, de);
            let u = &self.step_unitaries[j];
            rho = u * rho * u.adjoint();
        }
        if let Some(s) = &self.spam {
            rho = apply_on_leading(&s.measurement.unnormalized(), &rho, ds, de);
        }
        Ok(trace_trailing(&rho, de))
    }

    /// ρ_k for a full-length control sequence.
    pub fn exact_output(&self, seq: &ControlSequence) -> Result<CMat> {
        if seq.len() != self.steps() {
            return Err(Error::dim(format!("sequence has {} operations, process has {} steps", seq.len(), self.steps())));
        }
        for op in &seq.operations {
            if op.d_in() != self.system_dim || op.d_out() != self.system_dim {
                return Err(Error::dim("control operations must act on the system qubit"));
            }
        }
        self.output_with(&seq.chois())
    }
}

/// E ⊗ id applied to an operator on (S, rest), E given by its unnormalized Choi.
pub fn apply_on_leading(choi: &CMat, rho: &CMat, ds: usize, rest: usize) -> CMat {
    let mut out = CMat::zeros(ds * rest, ds * rest);
    for a in 0..ds {
        for b in 0..ds {
            for i in 0..ds {
                for j in 0..ds {
                    let w = choi[(a * ds + i, b * ds + j)];
                    if w == ZERO {
                        continue;
                    }
                    for e in 0..rest {
                        for f in 0..rest {
                            out[(a * rest + e, b * rest + f)] += w * rho[(i * rest + e, j * rest + f)];
                        }
                    }
                }
            }
        }
    }
    out
}

/// (U ⊗ I) X (U ⊗ I)† without forming U ⊗ I.
fn conj_leading(u: &CMat, x: &CMat) -> CMat {
    let n = u.nrows();
    let r = x.nrows() / n;
    // Y = (U ⊗ I) X
    let mut y = CMat::zeros(x.nrows(), x.ncols());
    for a in 0..n {
        for cc in 0..n {
            let w = u[(a, cc)];
            if w == ZERO {
                continue;
            }
            for e in 0..r {
                for col in 0..x.ncols() {
                    y[(a * r + e, col)] += w * x[(cc * r + e, col)];
                }
            }
        }
    }
    // Z = Y (U ⊗ I)†
    let mut z = CMat::zeros(x.nrows(), x.ncols());
    for b in 0..n {
        for d in 0..n {
            let w = u[(b, d)].conj();
            if w == ZERO {
                continue;
            }
            for row in 0..x.nrows() {
                for f in 0..r {
                    z[(row, b * r + f)] += y[(row, d * r + f)] * w;
                }
            }
        }
    }
    z
}

/// Exact Choi of the induced process: at every t_j the system is swapped
/// into a fresh output leg and replaced by half of an unnormalized
/// maximally entangled pair whose other half becomes the next input leg.
pub fn ground_truth_process_tensor(p: &SeProcess) -> Result<ProcessChoi> {
    let k = p.steps();
    if k > MAX_GROUND_TRUTH_STEPS {
        return Err(Error::invalid(format!("ground truth limited to {MAX_GROUND_TRUTH_STEPS} steps, got {k}")));
    }
    let (ds, de) = (p.system_dim, p.env_dim);
    let mut phi = CMat::zeros(ds * ds, ds * ds);
    for a in 0..ds {
        for b in 0..ds {
            phi[(a * ds + a, b * ds + b)] = c(1.0, 0.0);
        }
    }
    // Registers: (S, E, legs…) with legs most significant first.
    let mut x = p.initial_state.clone();
    if let Some(prep) = p.preparation() {
        x = apply_on_leading(&prep, &x, ds, de);
    }
    let mut rest = 1usize;
    for j in 0..k {
        if p.resets_at(j) {
            // reset E on (S, E, R): trace E, reattach the initial marginal
            let se_r = partial_trace(&x, &[ds, de, rest], &[true, false, true])?;
            let with_e = kron(&p.env_initial, &se_r);
            x = permute_legs(&with_e, &[de, ds, rest], &[1, 0, 2])?;
        }
        // (S, E, R) → (E, o_j, R), then prepend Φ on (S, i_{j+1}).
        let moved = permute_legs(&x, &[ds, de, rest], &[1, 0, 2])?;
        let grown = kron(&phi, &moved);
        // (S, i, E, o_j, R) → (S, E, i, o_j, R)
        x = permute_legs(&grown, &[ds, ds, de, ds, rest], &[0, 2, 1, 3, 4])?;
        rest *= ds * ds;
        x = conj_leading(&p.step_unitaries[j], &x);
    }
    if let Some(s) = &p.spam {
        x = apply_on_leading(&s.measurement.unnormalized(), &x, ds, de * rest);
    }
    let traced = partial_trace(&x, &[ds, de, rest], &[true, false, true])?;
    ProcessChoi::from_unnormalized(traced, k, ds)
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub data: DataTensor,
    /// Shots per measurement setting; `None` for exact probabilities.
    pub shots: Option<u64>,
    pub seed: u64,
}

impl SimulatedDataset {
    pub fn exact(&self) -> bool {
        self.shots.is_none()
    }
}

/// Draws multinomial counts for one setting from sequential binomials.
pub fn multinomial<R: Rng + ?Sized>(r: &mut R, shots: u64, probs: &[f64]) -> Vec<u64> {
    let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    let mut left = shots;
    let mut rem = 1.0;
    let mut out = vec![0u64; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let q = p.max(0.0) / total;
        if i + 1 == probs.len() || rem <= q {
            out[i] = left;
            break;
        }
        let frac = (q / rem).clamp(0.0, 1.0);
        let draw = Binomial::new(left, frac).expect("valid binomial").sample(r);
        out[i] = draw;
        left -= draw;
        rem -= q;
    }
    out
}

/// Outcome data for one multi-index: exact weighted-effect probabilities, or
/// per-setting multinomial counts drawn from a substream.
pub fn measure(rho: &CMat, povm: &Povm, shots: Option<u64>, seed: u64, stream: u64) -> Vec<f64> {
    let p: Vec<f64> = povm.probabilities(rho).into_iter().map(|v| v.max(0.0)).collect();
    match shots {
        None => p,
        Some(n) => {
            let mut out = vec![0.0; p.len()];
            let ns = povm.settings().len() as u64;
            for (s, setting) in povm.settings().iter().enumerate() {
                let mut r = substream(seed, stream * ns + s as u64);
                let probs: Vec<f64> = setting.iter().map(|&e| p[e]).collect();
                for (&e, cnt) in setting.iter().zip(multinomial(&mut r, n, &probs)) {
                    out[e] = cnt as f64;
                }
            }
            out
        }
    }
}

/// Full-grid dataset: every basis multi-index, measured with `povm`.
/// Multi-index μ uses substreams `(seed, μ·S + s)` for its S settings.
pub fn generate_dataset(
    p: &SeProcess,
    bases: &[InstrumentBasis],
    povm: &Povm,
    shots: Option<u64>,
    seed: u64,
) -> Result<SimulatedDataset> {
    if bases.len() != p.steps() {
        return Err(Error::dim("one basis per step required"));
    }
    let sizes: Vec<usize> = bases.iter().map(|b| b.len()).collect();
    let total: usize = sizes.iter().product();
    let columns = (0..total)
        .into_par_iter()
        .map(|m| {
            let mu = mixed_index(m, &sizes);
            let ops: Vec<CMat> = mu.iter().zip(bases).map(|(&i, b)| b.choi(i).clone()).collect();
            let rho = p.output_with(&ops)?;
            Ok(measure(&rho, povm, shots, seed, m as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let l = povm.len();
    let mut counts = vec![0.0; l * total];
    for (m, col) in columns.iter().enumerate() {
        for e in 0..l {
            counts[e * total + m] = col[e];
        }
    }
    Ok(SimulatedDataset { data: DataTensor::new(counts, l, sizes)?, shots, seed })
}

/// Row-major mixed-radix digits of `flat`.
pub fn mixed_index(flat: usize, sizes: &[usize]) -> Vec<usize> {
    if sizes.iter().all(|&s| s == sizes[0]) {
        return multi_index(flat, sizes[0], sizes.len());
    }
    let mut out = vec![0; sizes.len()];
    let mut f = flat;
    for s in (0..sizes.len()).rev() {
        out[s] = f % sizes[s];
        f /= sizes[s];
    }
    out
}

/// Replaces every basis element B by Λ₂ ∘ B ∘ Λ₁.
pub fn inject_gate_noise(basis: &InstrumentBasis, before: &ChannelChoi, after: &ChannelChoi) -> Result<InstrumentBasis> {
    for ch in [before, after] {
        if !ch.is_cp(1e-9) || !ch.is_tp(1e-9) {
            return Err(Error::invalid("gate noise must be CPTP"));
        }
    }
    let ops = (0..basis.len())
        .map(|i| before.then(&basis.op(i))?.then(after))
        .collect::<Result<Vec<_>>>()?;
    InstrumentBasis::new(&ops)
}

/// exp(−i g Z⊗Z).
pub fn zz_coupling(g: f64) -> CMat {
    let mut u = CMat::zeros(4, 4);
    for (i, s) in [1.0, -1.0, -1.0, 1.0].iter().enumerate() {
        let a = -g * s;
        u[(i, i)] = C64::new(a.cos(), a.sin());
    }
    u
}

/// SWAP on two qubits.
pub fn swap() -> CMat {
    let mut u = CMat::zeros(4, 4);
    for (r, col) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        u[(r, col)] = c(1.0, 0.0);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{frobenius, ket_bra, min_eigenvalue, trace};
    use crate::process_tensor::{causality_constraints, pt_apply, temporal_qmi};
    use crate::random::{random_density, random_kraus, rng};

    fn random_seq(r: &mut crate::random::SimRng, k: usize) -> ControlSequence {
        ControlSequence::new(
            (0..k).map(|_| ChannelChoi::from_kraus(&random_kraus(r, 2, 2)).unwrap()).collect(),
        )
    }

    #[test]
    fn identity_dynamics() {
        let rho0 = ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let p = SeProcess::closed(rho0.clone(), vec![identity(2); 2]).unwrap();
        let mut r = rng(1);
        let (u1, u2) = (haar_unitary(&mut r, 2), haar_unitary(&mut r, 2));
        let out = p.exact_output(&ControlSequence::from_unitaries(&[u1.clone(), u2.clone()])).unwrap();
        let want = &u2 * &u1 * &rho0 * u1.adjoint() * u2.adjoint();
        assert!(frobenius(&(out - want)) < 1e-12);
        let ups = ground_truth_process_tensor(&p).unwrap();
        assert!(temporal_qmi(&ups).iter().all(|q| q.abs() < 1e-9));
    }

    #[test]
    fn swap_environment_is_hand_computable() {
        // SWAP with environment |1⟩: the first step hands the system |1⟩,
        // the second returns whatever A_0 produced.
        let env = ket_bra(&[c(0.0, 0.0), c(1.0, 0.0)]);
        let mut r = rng(2);
        let rho_s = random_density(&mut r, 2, 2);
        let p = SeProcess::new(2, kron(&rho_s, &env), vec![swap(), swap()]).unwrap();
        let seq = random_seq(&mut r, 2);
        let out = p.exact_output(&seq).unwrap();
        let a0 = &seq.operations[0];
        assert!(frobenius(&(out - a0.apply(&rho_s).unwrap())) < 1e-12);
    }

    #[test]
    fn ground_truth_matches_exact_output() {
        for k in 1..=3 {
            let p = SeProcess::random(k, 2, 10 + k as u64).unwrap();
            let ups = ground_truth_process_tensor(&p).unwrap();
            assert!(ups.min_eigenvalue() > -1e-10);
            assert!((trace(ups.matrix()).re - 1.0).abs() < 1e-10);
            assert!(ups.max_containment_residual() < 1e-10);
            if k <= 2 {
                let set = causality_constraints(k, 2).unwrap();
                assert!(set.residual_inf(ups.matrix()) < 1e-10);
            }
            let mut r = rng(20 + k as u64);
            for _ in 0..20 {
                let seq = random_seq(&mut r, k);
                let a = pt_apply(&ups, &seq).unwrap();
                let b = p.exact_output(&seq).unwrap();
                assert!(frobenius(&(a - b)) < 1e-9);
            }
        }
    }

    #[test]
    fn noisy_device_is_close_to_ideal() {
        let p = SeProcess::noisy_device(3, 1).unwrap();
        let ups = ground_truth_process_tensor(&p).unwrap();
        assert!(ups.max_containment_residual() < 1e-10);
        let id = ControlSequence::from_unitaries(&vec![identity(2); 3]);
        let out = p.exact_output(&id).unwrap();
        assert!(out[(0, 0)].re > 0.8 && out[(0, 0)].re < 0.999);
    }

    #[test]
    fn markovian_process_has_no_memory() {
        let p = SeProcess::markovian(3, 4).unwrap();
        let ups = ground_truth_process_tensor(&p).unwrap();
        assert!(temporal_qmi(&ups).iter().all(|q| q.abs() < 1e-8));
        let p = SeProcess::random(2, 2, 4).unwrap();
        let ups = ground_truth_process_tensor(&p).unwrap();
        assert!(temporal_qmi(&ups)[1] > 1e-3);
    }

    #[test]
    fn spam_and_resets_are_part_of_the_process() {
        let p = SeProcess::random(3, 2, 7)
            .unwrap()
            .with_spam(ChannelChoi::depolarizing(2, 0.05), ChannelChoi::amplitude_damping(0.1))
            .unwrap()
            .with_env_reset(2);
        let ups = ground_truth_process_tensor(&p).unwrap();
        let mut r = rng(8);
        for _ in 0..10 {
            let seq = random_seq(&mut r, 3);
            let out = p.exact_output(&seq).unwrap();
            assert!(min_eigenvalue(&out) > -1e-10 && (trace(&out).re - 1.0).abs() < 1e-10);
            assert!(frobenius(&(pt_apply(&ups, &seq).unwrap() - out)) < 1e-9);
        }
        assert!(ground_truth_process_tensor(&SeProcess::random(5, 2, 1).unwrap()).is_err());
    }

    #[test]
    fn conditioned_process_continues_the_dynamics() {
        let p = SeProcess::random(4, 2, 17)
            .unwrap()
            .with_spam(ChannelChoi::depolarizing(2, 0.05), ChannelChoi::dephasing(0.1))
            .unwrap()
            .with_env_reset(2);
        let mut r = rng(18);
        let seq = random_seq(&mut r, 4);
        let ops = seq.chois();
        let full = p.output_with(&ops).unwrap();
        for j in 0..4 {
            let tail = p.conditioned(&ops[..j], 4 - j).unwrap();
            assert!(frobenius(&(tail.output_with(&ops[j..]).unwrap() - &full)) < 1e-12);
            let ups = ground_truth_process_tensor(&tail).unwrap();
            assert!(frobenius(&(ups.apply_chois(&ops[j..]).unwrap() - &full)) < 1e-10);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_unbiased() {
        let p = SeProcess::random(1, 2, 9).unwrap();
        let basis = crate::basis_design::reference_muub().instrument_basis().unwrap();
        let povm = Povm::pauli6();
        let a = generate_dataset(&p, std::slice::from_ref(&basis), &povm, Some(4096), 3).unwrap();
        let b = generate_dataset(&p, std::slice::from_ref(&basis), &povm, Some(4096), 3).unwrap();
        assert_eq!(a.data, b.data);
        let exact = generate_dataset(&p, std::slice::from_ref(&basis), &povm, None, 3).unwrap();
        let shots = 200_000u64;
        let big = generate_dataset(&p, &[basis], &povm, Some(shots), 4).unwrap();
        let f = big.data.frequencies();
        for (i, (&q, &pe)) in f.counts().iter().zip(exact.data.counts()).enumerate() {
            // effect frequencies are per-setting frequencies divided by 3
            let p_set = 3.0 * pe;
            let sigma = (p_set * (1.0 - p_set) / shots as f64).sqrt() / 3.0;
            assert!((q - pe).abs() <= 5.0 * sigma + 1e-12, "entry {i}");
        }
        for m in 0..10 {
            let col = a.data.column(m);
            assert_eq!(col[0] + col[3], 4096.0);
        }
    }

    #[test]
    fn gate_noise_injection() {
        let basis = crate::basis_design::reference_muub().instrument_basis().unwrap();
        let id = ChannelChoi::identity(2);
        let same = inject_gate_noise(&basis, &id, &id).unwrap();
        for i in 0..basis.len() {
            assert!(frobenius(&(same.choi(i) - basis.choi(i))) < 1e-12);
        }
        let bad = ChannelChoi::from_matrix(identity(4) * c(2.0, 0.0), 2, 2, crate::channels::Normalization::Unnormalized)
            .unwrap();
        assert!(inject_gate_noise(&basis, &bad, &id).is_err());
    }
}
