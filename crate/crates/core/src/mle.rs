//! Maximum-likelihood process tensor estimation by projected gradient
//! descent with backtracking, plus the linear-inversion estimator on the
//! same data layout.

use rayon::prelude::*;

use crate::algebra::{c, contract_trailing, hermitize, hs_inner, identity, qubit_count, CMat, PauliString};
use crate::channels::{qst_linear_inversion, InstrumentBasis, Povm};
use crate::error::{Error, Result};
use crate::process_tensor::{kron_fold, pt_linear_inversion_per_step, ProcessChoi};
use crate::projection::{conic_project, AffineConstraintSet, ConicProblem};

/// Observed counts n_{i,μ}, stored as `counts[i · settings + flat(μ)]`
/// with μ row-major (slot 0 slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct DataTensor {
    counts: Vec<f64>,
    basis_sizes: Vec<usize>,
    effect_count: usize,
}

impl DataTensor {
    pub fn new(counts: Vec<f64>, effect_count: usize, basis_sizes: Vec<usize>) -> Result<Self> {
        let settings: usize = basis_sizes.iter().product();
        if basis_sizes.is_empty() || basis_sizes.contains(&0) {
            return Err(Error::invalid("every step needs at least one basis element"));
        }
        if counts.len() != effect_count * settings {
            return Err(Error::dim(format!(
                "expected {effect_count}×{settings} counts, got {}",
                counts.len()
            )));
        }
        if let Some(bad) = counts.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("count {bad} is negative or non-finite")));
        }
        Ok(DataTensor { counts, basis_sizes, effect_count })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn basis_sizes(&self) -> &[usize] {
        &self.basis_sizes
    }

    pub fn steps(&self) -> usize {
        self.basis_sizes.len()
    }

    pub fn effect_count(&self) -> usize {
        self.effect_count
    }

    /// Number of basis multi-indices μ.
    pub fn settings(&self) -> usize {
        self.basis_sizes.iter().product()
    }

    pub fn get(&self, effect: usize, setting: usize) -> f64 {
        self.counts[effect * self.settings() + setting]
    }

    /// Counts of every effect for one multi-index.
    pub fn column(&self, setting: usize) -> Vec<f64> {
        (0..self.effect_count).map(|e| self.get(e, setting)).collect()
    }

    /// Frequencies normalized to sum 1 over effects for every μ.
    pub fn frequencies(&self) -> DataTensor {
        let s = self.settings();
        let mut out = self.counts.clone();
        for m in 0..s {
            let total: f64 = (0..self.effect_count).map(|e| self.counts[e * s + m]).sum();
            if total > 0.0 {
                for e in 0..self.effect_count {
                    out[e * s + m] /= total;
                }
            }
        }
        DataTensor { counts: out, basis_sizes: self.basis_sizes.clone(), effect_count: self.effect_count }
    }
}

fn check_shapes(ups: &ProcessChoi, bases: &[InstrumentBasis], povm: &Povm) -> Result<()> {
    if bases.len() != ups.steps() {
        return Err(Error::dim(format!("{} bases for a {}-step process", bases.len(), ups.steps())));
    }
    if bases.iter().any(|b| b.dim() != ups.d()) || povm.dim() != ups.d() {
        return Err(Error::dim("basis or POVM dimension differs from the process"));
    }
    Ok(())
}

/// Final (subnormalized) states for every basis multi-index, by contracting
/// one slot at a time from t_0.
pub fn predicted_states(ups: &ProcessChoi, bases: &[InstrumentBasis]) -> Result<Vec<CMat>> {
    if bases.len() != ups.steps() {
        return Err(Error::dim(format!("{} bases for a {}-step process", bases.len(), ups.steps())));
    }
    fn descend(m: &CMat, bases: &[InstrumentBasis], out: &mut Vec<CMat>) {
        match bases.split_first() {
            None => out.push(m.clone()),
            Some((b, rest)) => {
                for e in b.chois() {
                    descend(&contract_trailing(m, e), rest, out);
                }
            }
        }
    }
    let root = ups.unnormalized();
    let (first, rest) = bases.split_first().expect("k ≥ 1");
    let parts: Vec<Vec<CMat>> = first
        .chois()
        .par_iter()
        .map(|e| {
            let mut out = Vec::new();
            descend(&contract_trailing(&root, e), rest, &mut out);
            out
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

/// p_{i,μ} = Tr[(Π_i ⊗ B^{μ_{k-1}ᵀ} ⊗ … ⊗ B^{μ_0ᵀ}) Υ], laid out like [`DataTensor`].
pub fn predicted_probabilities(ups: &ProcessChoi, bases: &[InstrumentBasis], povm: &Povm) -> Result<Vec<f64>> {
    check_shapes(ups, bases, povm)?;
    let states = predicted_states(ups, bases)?;
    let s = states.len();
    let mut p = vec![0.0; povm.len() * s];
    for (m, rho) in states.iter().enumerate() {
        for (e, q) in povm.probabilities(rho).into_iter().enumerate() {
            p[e * s + m] = q;
        }
    }
    Ok(p)
}

/// Floor applied to predicted probabilities inside logarithms and ratios.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

fn cost_from(p: &[f64], data: &DataTensor) -> f64 {
    data.counts
        .iter()
        .zip(p)
        .filter(|(n, _)| **n > 0.0)
        .map(|(n, q)| -n * q.max(PROBABILITY_FLOOR).ln())
        .sum()
}

fn check_data(data: &DataTensor, bases: &[InstrumentBasis], povm: &Povm) -> Result<()> {
    let sizes: Vec<usize> = bases.iter().map(|b| b.len()).collect();
    if data.basis_sizes != sizes || data.effect_count != povm.len() {
        return Err(Error::dim("data shape does not match the basis and POVM"));
    }
    Ok(())
}

/// f(Υ) = −Σ n log p.
pub fn log_likelihood(ups: &ProcessChoi, data: &DataTensor, bases: &[InstrumentBasis], povm: &Povm) -> Result<f64> {
    check_data(data, bases, povm)?;
    let p = predicted_probabilities(ups, bases, povm)?;
    Ok(cost_from(&p, data))
}

/// ∇f = −Σ (n/p) d^k Π_i ⊗ B^{μ_{k-1}ᵀ} ⊗ … ⊗ B^{μ_0ᵀ}, Hermitized.
pub fn log_likelihood_gradient(
    ups: &ProcessChoi,
    data: &DataTensor,
    bases: &[InstrumentBasis],
    povm: &Povm,
) -> Result<CMat> {
    check_data(data, bases, povm)?;
    let p = predicted_probabilities(ups, bases, povm)?;
    Ok(gradient_from(&p, data, bases, povm, ups.d()))
}

fn gradient_from(p: &[f64], data: &DataTensor, bases: &[InstrumentBasis], povm: &Povm, d: usize) -> CMat {
    let s = data.settings();
    let leaves: Vec<CMat> = (0..s)
        .map(|m| {
            let mut x = CMat::zeros(d, d);
            for (e, eff) in povm.effects().iter().enumerate() {
                let n = data.counts[e * s + m];
                if n > 0.0 {
                    x += eff * c(n / p[e * s + m].max(PROBABILITY_FLOOR), 0.0);
                }
            }
            x
        })
        .collect();
    let factors: Vec<Vec<CMat>> = bases.iter().map(|b| b.chois().iter().map(|e| e.transpose()).collect()).collect();
    let scale = -(d as f64).powi(bases.len() as i32);
    hermitize(&(kron_fold(leaves, &factors) * c(scale, 0.0)))
}

#[derive(Debug, Clone)]
pub struct MleConfig {
    /// Gradient step μ; `None` selects 2n²/(3S) with n the Choi dimension
    /// and S the number of basis multi-indices, i.e. 2n²/3 on data whose
    /// total mass is one.
    pub step_size: Option<f64>,
    /// Armijo parameter γ.
    pub armijo: f64,
    /// Backtracking shrink factor for β.
    pub shrink: f64,
    pub stop_delta: f64,
    pub max_outer_iterations: usize,
    pub projection_tolerance: f64,
    pub projection_max_iterations: usize,
    /// Scale counts so every multi-index sums to one before fitting.
    pub normalize_data: bool,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            step_size: None,
            armijo: 0.3,
            shrink: 0.5,
            stop_delta: 1e-6,
            max_outer_iterations: 2000,
            projection_tolerance: 1e-9,
            projection_max_iterations: 5000,
            normalize_data: true,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::invalid("armijo parameter must lie in (0, 1)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid("shrink factor must lie in (0, 1)"));
        }
        if !(self.stop_delta > 0.0) {
            return Err(Error::invalid("stop_delta must be positive"));
        }
        if let Some(mu) = self.step_size {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::invalid("step size must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    BacktrackingUnderflow,
    ProjectionFailed,
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub process: ProcessChoi,
    pub cost: f64,
    pub iterations: usize,
    pub status: FitStatus,
    /// Cost after every accepted iteration, starting with the initial point.
    pub cost_trace: Vec<f64>,
    pub projection_eigs: usize,
    pub projection_failures: usize,
    pub final_step_size: f64,
    pub min_eigenvalue: f64,
    pub constraint_residual: f64,
}

impl MleFit {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

/// pgdb starting from the maximally mixed Choi.
pub fn pgdb_fit(
    data: &DataTensor,
    bases: &[InstrumentBasis],
    povm: &Povm,
    constraints: &AffineConstraintSet,
    cfg: &MleConfig,
) -> Result<MleFit> {
    let k = bases.len();
    let d = povm.dim();
    let n = d.pow(2 * k as u32 + 1);
    let start = ProcessChoi::new(identity(n) / c(n as f64, 0.0), k, d)?;
    pgdb_fit_from(data, bases, povm, constraints, cfg, start)
}

/// pgdb from a caller-supplied feasible starting point.
pub fn pgdb_fit_from(
    data: &DataTensor,
    bases: &[InstrumentBasis],
    povm: &Povm,
    constraints: &AffineConstraintSet,
    cfg: &MleConfig,
    start: ProcessChoi,
) -> Result<MleFit> {
    cfg.validate()?;
    check_data(data, bases, povm)?;
    check_shapes(&start, bases, povm)?;
    if constraints.dim() != start.dim() {
        return Err(Error::dim("constraints do not match the process dimension"));
    }
    let data = if cfg.normalize_data { data.frequencies() } else { data.clone() };
    let (k, d) = (start.steps(), start.d());
    let n = start.dim() as f64;
    let mut mu = cfg.step_size.unwrap_or(2.0 * n * n / 3.0 / data.settings() as f64);

    let mut ups = start.into_matrix();
    let mut p = predicted_probabilities(&ProcessChoi::new(ups.clone(), k, d)?, bases, povm)?;
    let mut f = cost_from(&p, &data);
    let mut trace = vec![f];
    let mut lambda: Option<Vec<f64>> = None;
    let mut eigs = 0;
    let mut failures = 0;
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..cfg.max_outer_iterations {
        iterations = it + 1;
        let grad = gradient_from(&p, &data, bases, povm, d);
        // Projection with automatic step halving if it fails.
        let mut projected = None;
        for _ in 0..20 {
            let target = &ups - &grad * c(mu, 0.0);
            let mut prob = ConicProblem::new(target, constraints)
                .with_tolerance(cfg.projection_tolerance)
                .with_max_iterations(cfg.projection_max_iterations);
            if let Some(l) = &lambda {
                prob = prob.with_warm_start(l.clone());
            }
            let rep = conic_project(&prob);
            eigs += rep.eig_count;
            if rep.converged {
                projected = Some(rep);
                break;
            }
            failures += 1;
            mu *= 0.5;
            lambda = None;
        }
        let Some(rep) = projected else {
            status = FitStatus::ProjectionFailed;
            break;
        };
        lambda = rep.dual.clone();
        let dir = &rep.solution - &ups;
        let slope = hs_inner(&dir, &grad);
        let mut beta = 1.0;
        let accepted = loop {
            let trial = &ups + &dir * c(beta, 0.0);
            let pt = predicted_probabilities(&ProcessChoi::new(trial.clone(), k, d)?, bases, povm)?;
            let ft = cost_from(&pt, &data);
            if ft <= f + cfg.armijo * beta * slope {
                break Some((trial, pt, ft));
            }
            beta *= cfg.shrink;
            if beta < 1e-10 {
                break None;
            }
        };
        let Some((trial, pt, ft)) = accepted else {
            status = FitStatus::BacktrackingUnderflow;
            break;
        };
        let decrease = f - ft;
        ups = hermitize(&trial);
        p = pt;
        f = ft;
        trace.push(f);
        if decrease < cfg.stop_delta {
            status = FitStatus::Converged;
            break;
        }
    }

    let process = ProcessChoi::new(ups, k, d)?;
    Ok(MleFit {
        min_eigenvalue: process.min_eigenvalue(),
        constraint_residual: constraints.residual_inf(process.matrix()),
        process,
        cost: f,
        iterations,
        status,
        cost_trace: trace,
        projection_eigs: eigs,
        projection_failures: failures,
        final_step_size: mu,
    })
}

/// Linear inversion: per-multi-index state tomography, then the dual-frame
/// expansion. The result may be unphysical on finite-shot data.
pub fn linear_inversion_fit(data: &DataTensor, bases: &[InstrumentBasis], povm: &Povm) -> Result<ProcessChoi> {
    check_data(data, bases, povm)?;
    let freq = data.frequencies();
    let states = (0..freq.settings())
        .map(|m| qst_linear_inversion(&freq.column(m), povm))
        .collect::<Result<Vec<_>>>()?;
    let duals: Vec<_> = bases.iter().map(|b| b.duals().clone()).collect();
    pt_linear_inversion_per_step(&states, &duals)
}

/// Linear inversion followed by the physical projection; a feasible warm
/// start for [`pgdb_fit_from`].
pub fn projected_linear_inversion(
    data: &DataTensor,
    bases: &[InstrumentBasis],
    povm: &Povm,
    constraints: &AffineConstraintSet,
    tolerance: f64,
) -> Result<ProcessChoi> {
    let li = linear_inversion_fit(data, bases, povm)?;
    let (k, d) = (li.steps(), li.d());
    if constraints.dim() != li.dim() {
        return Err(Error::dim("constraints do not match the process dimension"));
    }
    let rep = conic_project(&ConicProblem::new(li.into_matrix(), constraints).with_tolerance(tolerance).with_max_iterations(20_000));
    if !rep.converged {
        return Err(Error::NotConverged(format!("projection of the linear-inversion estimate: {:?}", rep.failure)));
    }
    ProcessChoi::new(hermitize(&rep.solution), k, d)
}

/// Slot-pair Pauli blocks (index into the 2q-qubit strings of (i_{j+1}, o_j))
/// lying in the span of a basis; only these components of a process are
/// determined by data taken with that basis.
fn visible_pair_blocks(basis: &InstrumentBasis) -> Vec<bool> {
    let d = basis.dim();
    let q = qubit_count(d).unwrap_or(0);
    (0..d.pow(4))
        .map(|idx| {
            let m = PauliString::from_index(idx, 2 * q).matrix();
            let alpha = basis.duals().coefficients(&m);
            let mut back = CMat::zeros(m.nrows(), m.ncols());
            for (a, b) in alpha.iter().zip(basis.chois()) {
                back += b * *a;
            }
            crate::algebra::frobenius(&(back - &m)) < 1e-8 * (d * d) as f64
        })
        .collect()
}

/// Linear inversion completed into the feasible set: every Pauli component
/// the data determine is held at its inverted value, causality rows at
/// theirs, and the remaining components are chosen by the physical
/// projection. Succeeds when such a physical completion exists (exact data).
pub fn completed_linear_inversion(
    data: &DataTensor,
    bases: &[InstrumentBasis],
    povm: &Povm,
    constraints: &AffineConstraintSet,
    tolerance: f64,
) -> Result<ProcessChoi> {
    let li = linear_inversion_fit(data, bases, povm)?;
    let (k, d) = (li.steps(), li.d());
    let q = qubit_count(d).ok_or_else(|| Error::invalid("leg dimension must be a power of two"))?;
    let causal = constraints.pauli_rows().ok_or_else(|| Error::invalid("completion needs Pauli constraint rows"))?;
    let total = constraints.qubits().unwrap_or(0);
    if total != q * (2 * k + 1) {
        return Err(Error::dim("constraints do not match the process dimension"));
    }
    let visible: Vec<Vec<bool>> = bases.iter().map(visible_pair_blocks).collect();
    let mut rows: std::collections::BTreeMap<usize, (PauliString, f64, String)> = std::collections::BTreeMap::new();
    for (s, (&r, l)) in causal.iter().zip(constraints.rhs().iter().zip(constraints.labels())) {
        rows.insert(s.index(), (s.clone(), r, l.clone()));
    }
    let leg = 1usize << (2 * q);
    let n_strings = 1usize << (2 * total);
    let ups = li.matrix();
    for idx in 0..n_strings {
        let s = PauliString::from_index(idx, total);
        // slot j occupies legs (i_{j+1}, o_j) at positions 2(k−j)−1, 2(k−j)
        let digits = crate::process_tensor::multi_index(idx, leg, 2 * k + 1);
        let seen = (0..k).all(|j| {
            let pos = 2 * (k - j) - 1;
            visible[j][digits[pos] * leg + digits[pos + 1]]
        });
        if seen && !rows.contains_key(&idx) {
            let v = s.trace_with(ups).re;
            rows.insert(idx, (s, v, format!("data:{idx}")));
        }
    }
    let (mut st, mut rh, mut lb) = (Vec::new(), Vec::new(), Vec::new());
    for (_, (s, r, l)) in rows {
        st.push(s);
        rh.push(r);
        lb.push(l);
    }
    let set = AffineConstraintSet::pauli(total, st, rh, lb)?;
    let rep = conic_project(&ConicProblem::new(li.into_matrix(), &set).with_tolerance(tolerance).with_max_iterations(5_000));
    if !rep.converged {
        return Err(Error::NotConverged(format!("no physical completion of the linear-inversion estimate: {:?}", rep.failure)));
    }
    ProcessChoi::new(hermitize(&rep.solution), k, d)
}

/// Exact (noiseless) data for a known process.
pub fn exact_data(ups: &ProcessChoi, bases: &[InstrumentBasis], povm: &Povm) -> Result<DataTensor> {
    let p = predicted_probabilities(ups, bases, povm)?;
    let clipped = p.into_iter().map(|v| v.max(0.0)).collect();
    DataTensor::new(clipped, povm.len(), bases.iter().map(|b| b.len()).collect())
}

/// Directional derivative ⟨∇f, H⟩ in the real Hilbert–Schmidt product.
pub fn directional_derivative(grad: &CMat, direction: &CMat) -> f64 {
    hs_inner(grad, direction)
}
