//! Model validation by reconstruction fidelity, and model-based choice of
//! control sequences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{hermitian_eig, hermitize, ket_bra, min_eigenvalue, psd_sqrt, c, CMat, C64};
use crate::basis_design::{unitary_from_params, UnitaryParams};
use crate::channels::ChannelChoi;
use crate::error::{Error, Result};
use crate::markov_order::{cmo_apply, MemoryModel};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::process_tensor::{pt_apply, ControlSequence, ProcessChoi};
use crate::projection::project_density;
use crate::random::{haar_unitary, substream, uniform};
use crate::simulator::SeProcess;

/// Anything that maps a k-step control sequence to a final system state.
pub trait Predictor: Sync {
    fn steps(&self) -> usize;
    fn predict(&self, seq: &ControlSequence) -> Result<CMat>;
}

impl Predictor for ProcessChoi {
    fn steps(&self) -> usize {
        ProcessChoi::steps(self)
    }

    fn predict(&self, seq: &ControlSequence) -> Result<CMat> {
        pt_apply(self, seq)
    }
}

impl Predictor for MemoryModel {
    fn steps(&self) -> usize {
        self.k
    }

    fn predict(&self, seq: &ControlSequence) -> Result<CMat> {
        cmo_apply(self, seq)
    }
}

impl Predictor for SeProcess {
    fn steps(&self) -> usize {
        SeProcess::steps(self)
    }

    fn predict(&self, seq: &ControlSequence) -> Result<CMat> {
        self.exact_output(seq)
    }
}

const STATE_TOLERANCE: f64 = 1e-8;

fn check_state(rho: &CMat, name: &str) -> Result<()> {
    if !rho.is_square() || rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid(format!("{name} is not a finite square matrix")));
    }
    if min_eigenvalue(&hermitize(rho)) < -STATE_TOLERANCE {
        return Err(Error::invalid(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

/// Uhlmann fidelity (Tr √(√ρ σ √ρ))².
pub fn state_fidelity(rho: &CMat, sigma: &CMat) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::dim("states have different dimensions"));
    }
    check_state(rho, "first state")?;
    check_state(sigma, "second state")?;
    let s = psd_sqrt(&hermitize(rho));
    let inner = hermitize(&(&s * hermitize(sigma) * &s));
    let root: f64 = hermitian_eig(&inner)?.values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((root * root).clamp(0.0, 1.0))
}

/// ½‖ρ − σ‖₁.
pub fn trace_distance(rho: &CMat, sigma: &CMat) -> f64 {
    let diff = hermitize(&(rho - sigma));
    hermitian_eig(&diff).map(|e| 0.5 * e.values.iter().map(|v| v.abs()).sum::<f64>()).unwrap_or(f64::NAN)
}

/// Model output as a state: unphysical predictions (possible for linear
/// inversion) are replaced by the nearest density matrix.
pub fn physical_prediction(model: &dyn Predictor, seq: &ControlSequence) -> Result<CMat> {
    let rho = hermitize(&model.predict(seq)?);
    let tr = rho.trace().re;
    if min_eigenvalue(&rho) >= 0.0 && (tr - 1.0).abs() < 1e-12 {
        return Ok(rho);
    }
    Ok(project_density(&rho))
}

/// Haar-random unitary sequence `index` of the stream `seed`.
pub fn random_unitary_sequence(steps: usize, seed: u64, index: u64) -> ControlSequence {
    let mut r = substream(seed, index);
    let us: Vec<CMat> = (0..steps).map(|_| haar_unitary(&mut r, 2)).collect();
    ControlSequence::from_unitaries(&us)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityReport {
    pub fidelities: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub seed: u64,
    /// Substream index of each sequence.
    pub sequence_indices: Vec<u64>,
}

/// Median, quartiles by linear interpolation of the sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl FidelityReport {
    pub fn from_values(fidelities: Vec<f64>, seed: u64, sequence_indices: Vec<u64>) -> Self {
        let mut sorted = fidelities.clone();
        sorted.sort_by(f64::total_cmp);
        let (mean, std) = mean_std(&fidelities);
        FidelityReport {
            mean,
            std,
            median: quantile(&sorted, 0.5),
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
            min: sorted.first().copied().unwrap_or(f64::NAN),
            fidelities,
            seed,
            sequence_indices,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Fidelity between model and oracle on `n` Haar-random unitary sequences.
pub fn reconstruction_fidelity(model: &dyn Predictor, oracle: &dyn Predictor, n: usize, seed: u64) -> Result<FidelityReport> {
    if model.steps() != oracle.steps() {
        return Err(Error::dim("model and oracle have different step counts"));
    }
    let k = model.steps();
    let fid = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seq = random_unitary_sequence(k, seed, i);
            state_fidelity(&physical_prediction(model, &seq)?, &hermitize(&oracle.predict(&seq)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FidelityReport::from_values(fid, seed, (0..n as u64).collect()))
}

/// Fidelity against held-out reference states, e.g. tomographic estimates.
pub fn held_out_fidelity(model: &dyn Predictor, held_out: &[(ControlSequence, CMat)], seed: u64) -> Result<FidelityReport> {
    let fid = held_out
        .par_iter()
        .map(|(seq, rho)| state_fidelity(&physical_prediction(model, seq)?, &project_density(rho)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FidelityReport::from_values(fid, seed, (0..held_out.len() as u64).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceOptimum {
    pub parameters: Vec<UnitaryParams>,
    pub objective: f64,
    pub iterations: usize,
}

impl SequenceOptimum {
    pub fn sequence(&self) -> ControlSequence {
        params_sequence(&self.parameters)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_evaluations: usize,
    pub initial_step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { restarts: 16, max_evaluations: 1500, initial_step: 0.4, tolerance: 1e-12, seed: 0 }
    }
}

pub fn params_sequence(params: &[UnitaryParams]) -> ControlSequence {
    let us: Vec<CMat> = params.iter().map(unitary_from_params).collect();
    ControlSequence::from_unitaries(&us)
}

fn unpack(x: &[f64]) -> Vec<UnitaryParams> {
    x.chunks(3).map(|t| UnitaryParams::new(t[0], t[1], t[2])).collect()
}

fn pack(p: &[UnitaryParams]) -> Vec<f64> {
    p.iter().flat_map(|u| u.to_array()).collect()
}

/// Multi-start Nelder–Mead maximization of `objective` over per-slot Euler
/// angles. Start 0 is `seed_point`; the others are uniform in [−π, π].
fn maximize(
    slots: usize,
    seed_point: &[UnitaryParams],
    cfg: &OptimizerConfig,
    objective: &(dyn Fn(&[UnitaryParams]) -> Result<f64> + Sync),
) -> Result<SequenceOptimum> {
    if seed_point.len() != slots {
        return Err(Error::dim("seed sequence has the wrong number of slots"));
    }
    let nm = NelderMeadConfig { max_evaluations: cfg.max_evaluations, initial_step: cfg.initial_step, tolerance: cfg.tolerance };
    let pi = std::f64::consts::PI;
    let runs = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let x0 = if r == 0 {
                pack(seed_point)
            } else {
                let mut g = substream(cfg.seed, r as u64);
                (0..3 * slots).map(|_| uniform(&mut g, -pi, pi)).collect()
            };
            let start_value = objective(&unpack(&x0))?;
            let res = nelder_mead(|x| objective(&unpack(x)).map(|v| -v).unwrap_or(f64::INFINITY), &x0, &nm);
            let (x, v) = if -res.value >= start_value { (res.x, -res.value) } else { (x0, start_value) };
            Ok((x, v, res.evaluations))
        })
        .collect::<Result<Vec<_>>>()?;
    let iterations = runs.iter().map(|r| r.2).sum();
    let (x, v, _) = runs.into_iter().fold((vec![], f64::NEG_INFINITY, 0), |a, b| if b.1 > a.1 { b } else { a });
    let parameters = unpack(&x);
    // Report the freshly re-evaluated prediction at the returned point.
    let objective = objective(&parameters)?;
    debug_assert!((objective - v).abs() < 1e-12);
    Ok(SequenceOptimum { parameters, objective, iterations })
}

/// Gates maximizing F(target, predicted output), seeded with `naive`.
pub fn optimize_sequence(model: &dyn Predictor, target: &CMat, naive: &[UnitaryParams], cfg: &OptimizerConfig) -> Result<SequenceOptimum> {
    check_state(target, "target")?;
    let slots = model.steps();
    maximize(slots, naive, cfg, &|p| state_fidelity(target, &physical_prediction(model, &params_sequence(p))?))
}

/// Shared gates for slots 1…k−1 that best preserve every input state
/// A_i|0⟩⟨0|A_i† prepared in slot 0: maximizes Σ_i F², seeded with identities.
pub fn optimize_identity(model: &dyn Predictor, input_gates: &[CMat], cfg: &OptimizerConfig) -> Result<SequenceOptimum> {
    let k = model.steps();
    if k < 2 || input_gates.is_empty() {
        return Err(Error::invalid("needs at least two steps and one input gate"));
    }
    let zero = ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]);
    let ideals: Vec<CMat> = input_gates.iter().map(|a| a * &zero * a.adjoint()).collect();
    let identity_seed = vec![UnitaryParams::new(0.0, 0.0, 0.0); k - 1];
    maximize(k - 1, &identity_seed, cfg, &|p| identity_objective(model, input_gates, &ideals, p))
}

/// Σ_i F(ideal_i, predicted_i)² for shared gates `p` after each input gate.
pub fn identity_objective(model: &dyn Predictor, inputs: &[CMat], ideals: &[CMat], p: &[UnitaryParams]) -> Result<f64> {
    let tail: Vec<ChannelChoi> = p.iter().map(|u| ChannelChoi::from_unitary(&unitary_from_params(u))).collect();
    let mut total = 0.0;
    for (a, ideal) in inputs.iter().zip(ideals) {
        let mut ops = vec![ChannelChoi::from_unitary(a)];
        ops.extend(tail.iter().cloned());
        let f = state_fidelity(ideal, &physical_prediction(model, &ControlSequence::new(ops))?)?;
        total += f * f;
    }
    Ok(total)
}

/// Euler angles of a single-qubit unitary, up to global phase.
pub fn unitary_to_params(u: &CMat) -> UnitaryParams {
    let (a, b) = (u[(0, 0)], u[(1, 0)]);
    let theta = 2.0 * b.norm().atan2(a.norm());
    let ph = |z: C64| if z.norm() > 1e-12 { z.arg() } else { 0.0 };
    // Remove the global phase so that u00 is real and non-negative.
    let g = ph(a);
    let phi = ph(b) - g;
    let lambda = if a.norm() > 1e-12 { ph(u[(1, 1)]) - g - phi } else { ph(-u[(0, 1)]) - g };
    UnitaryParams::new(theta, phi, lambda)
}

/// The four identity-preservation inputs: I, X, H and the Y-basis preparation.
pub fn tomographic_inputs() -> Vec<CMat> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = CMat::zeros(2, 2);
    x[(0, 1)] = c(1.0, 0.0);
    x[(1, 0)] = c(1.0, 0.0);
    let hd = CMat::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]);
    let sh = CMat::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, -h), c(0.0, h), c(-h, 0.0)]);
    vec![crate::algebra::identity(2), x, hd, sh]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::identity;
    use crate::random::{random_density, rng};
    use crate::simulator::ground_truth_process_tensor;

    #[test]
    fn fidelity_closed_forms() {
        let z = ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let o = ket_bra(&[c(0.0, 0.0), c(1.0, 0.0)]);
        assert!((state_fidelity(&z, &z).unwrap() - 1.0).abs() < 1e-12);
        assert!(state_fidelity(&z, &o).unwrap().abs() < 1e-12);
        assert!((state_fidelity(&z, &(identity(2) * c(0.5, 0.0))).unwrap() - 0.5).abs() < 1e-12);
        let mut r = rng(1);
        let (a, b) = (random_density(&mut r, 2, 2), random_density(&mut r, 2, 2));
        assert!((state_fidelity(&a, &b).unwrap() - state_fidelity(&b, &a).unwrap()).abs() < 1e-10);
        assert!(state_fidelity(&(identity(2) * c(-1.0, 0.0)), &a).is_err());
        assert!((trace_distance(&z, &o) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_angles_round_trip() {
        let mut r = rng(2);
        for _ in 0..20 {
            let u = haar_unitary(&mut r, 2);
            let v = unitary_from_params(&unitary_to_params(&u));
            let overlap = (u.adjoint() * v).trace().norm() / 2.0;
            assert!((overlap - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn self_consistent_model_is_perfect() {
        let p = SeProcess::random(2, 2, 3).unwrap();
        let ups = ground_truth_process_tensor(&p).unwrap();
        let rep = reconstruction_fidelity(&ups, &p, 25, 4).unwrap();
        assert!(rep.min >= 1.0 - 1e-9);
        assert_eq!(rep, reconstruction_fidelity(&ups, &p, 25, 4).unwrap());
    }

    #[test]
    fn reachable_target_is_reached() {
        let rho0 = ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let p = SeProcess::closed(rho0, vec![identity(2); 2]).unwrap();
        let mut r = rng(5);
        let v = haar_unitary(&mut r, 2);
        let target = &v * ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]) * v.adjoint();
        let naive = [UnitaryParams::new(0.3, 0.0, 0.0), UnitaryParams::new(0.0, 0.0, 0.0)];
        let cfg = OptimizerConfig { restarts: 4, ..OptimizerConfig::default() };
        let opt = optimize_sequence(&p, &target, &naive, &cfg).unwrap();
        assert!(opt.objective >= 1.0 - 1e-6, "{}", opt.objective);
        let again = state_fidelity(&target, &p.predict(&opt.sequence()).unwrap()).unwrap();
        assert!((again - opt.objective).abs() < 1e-10);
    }

    #[test]
    fn noiseless_identity_is_optimal() {
        let rho0 = ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let p = SeProcess::closed(rho0, vec![identity(2); 3]).unwrap();
        let cfg = OptimizerConfig { restarts: 2, max_evaluations: 200, ..OptimizerConfig::default() };
        let opt = optimize_identity(&p, &tomographic_inputs(), &cfg).unwrap();
        assert!((opt.objective - 4.0).abs() < 1e-9);
    }
}
