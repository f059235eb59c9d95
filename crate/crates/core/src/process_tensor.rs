//! Multi-time process tensors in Choi form.
//!
//! A `k`-step process on a `d`-level system is stored as a trace-1 operator
//! on legs `o_k, i_k, o_{k-1}, …, i_1, o_0` (leftmost leg most significant).
//! Operations are supplied in time order `A_0, …, A_{k-1}`; `A_j` maps leg
//! `o_j` to leg `i_{j+1}`.

use crate::algebra::{
    c, contract_trailing, eig_hermitized, frobenius, hermitian_defect, identity, kron, partial_trace,
    qubit_count, trace_leading, CMat, LabeledTensor, Pauli, PauliString,
};
use crate::channels::{ChannelChoi, DualFrame};
use crate::error::{Error, Result};
use crate::projection::AffineConstraintSet;

/// Choi operator of a process tensor, trace 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessChoi {
    matrix: CMat,
    steps: usize,
    d: usize,
}

/// Time-ordered operations `A_0, …, A_{k-1}`.
#[derive(Debug, Clone)]
pub struct ControlSequence {
    pub operations: Vec<ChannelChoi>,
}

impl ControlSequence {
    pub fn new(operations: Vec<ChannelChoi>) -> Self {
        ControlSequence { operations }
    }

    pub fn from_unitaries(us: &[CMat]) -> Self {
        ControlSequence { operations: us.iter().map(ChannelChoi::from_unitary).collect() }
    }

    pub fn len(&self) -> usize {
        self.operations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operations.is_empty()
    }

    /// Unnormalized Choi matrices in time order.
    pub fn chois(&self) -> Vec<CMat> {
        self.operations.iter().map(|o| o.unnormalized()).collect()
    }
}

/// Leg names from the most significant leg down: `ok, ik, …, i1, o0`.
pub fn leg_names(steps: usize) -> Vec<String> {
    let mut v = Vec::with_capacity(2 * steps + 1);
    for j in (1..=steps).rev() {
        v.push(format!("o{j}"));
        v.push(format!("i{j}"));
    }
    v.push("o0".into());
    v
}

impl ProcessChoi {
    pub fn new(matrix: CMat, steps: usize, d: usize) -> Result<Self> {
        let n = d.pow(2 * steps as u32 + 1);
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::dim(format!(
                "{steps}-step process on d={d} needs a {n}x{n} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if steps == 0 {
            return Err(Error::invalid("a process tensor needs at least one step"));
        }
        Ok(ProcessChoi { matrix, steps, d })
    }

    /// From a Choi with trace d^k (maximally entangled pairs unnormalized).
    pub fn from_unnormalized(matrix: CMat, steps: usize, d: usize) -> Result<Self> {
        let scale = (d as f64).powi(steps as i32);
        ProcessChoi::new(matrix / c(scale, 0.0), steps, d)
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn leg_dims(&self) -> Vec<usize> {
        vec![self.d; 2 * self.steps + 1]
    }

    pub fn labeled(&self) -> LabeledTensor {
        let legs = leg_names(self.steps).into_iter().map(|n| (n, self.d)).collect();
        LabeledTensor::new(legs, self.matrix.clone()).expect("shape checked")
    }

    /// d^k Υ.
    pub fn unnormalized(&self) -> CMat {
        &self.matrix * c((self.d as f64).powi(self.steps as i32), 0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eig_hermitized(&self.matrix).values[0]
    }

    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.matrix)
    }

    /// Υ_{j:0}: the first `j` steps, obtained by tracing all later legs.
    pub fn reduced(&self, j: usize) -> Result<ProcessChoi> {
        if j == 0 || j > self.steps {
            return Err(Error::invalid(format!("cannot reduce a {}-step process to {j} steps", self.steps)));
        }
        let drop = self.d.pow(2 * (self.steps - j) as u32);
        Ok(ProcessChoi { matrix: trace_leading(&self.matrix, drop), steps: j, d: self.d })
    }

    /// The system state at t_0 (marginal on o_0).
    pub fn initial_state(&self) -> CMat {
        trace_leading(&self.matrix, self.dim() / self.d)
    }

    /// Frobenius residual of Tr_{o_j}[Υ_{j:0}] = I/d ⊗ Υ_{j-1:0}, for j = 1..=k.
    pub fn containment_residuals(&self) -> Vec<f64> {
        let d = self.d;
        (1..=self.steps)
            .map(|j| {
                let upto = self.reduced(j).expect("valid").matrix;
                let lhs = trace_leading(&upto, d);
                let earlier = if j == 1 {
                    trace_leading(&lhs, d)
                } else {
                    self.reduced(j - 1).expect("valid").matrix
                };
                let rhs = kron(&(identity(d) / c(d as f64, 0.0)), &earlier);
                frobenius(&(lhs - rhs))
            })
            .collect()
    }

    pub fn max_containment_residual(&self) -> f64 {
        self.containment_residuals().into_iter().fold(0.0, f64::max)
    }

    /// Marginal on (o_j, i_j) for j ≥ 1, trace 1.
    pub fn step_marginal(&self, j: usize) -> Result<CMat> {
        if j == 0 || j > self.steps {
            return Err(Error::invalid(format!("no step {j} in a {}-step process", self.steps)));
        }
        let mut keep = vec![false; 2 * self.steps + 1];
        keep[2 * (self.steps - j)] = true;
        keep[2 * (self.steps - j) + 1] = true;
        partial_trace(&self.matrix, &self.leg_dims(), &keep)
    }

    /// Output state for unnormalized operation Chois in time order.
    pub fn apply_chois(&self, chois: &[CMat]) -> Result<CMat> {
        if chois.len() != self.steps {
            return Err(Error::dim(format!("sequence has {} operations, process has {} steps", chois.len(), self.steps)));
        }
        let pair = self.d * self.d;
        let mut m = self.unnormalized();
        for a in chois {
            if a.nrows() != pair || !a.is_square() {
                return Err(Error::dim("operation Choi does not match the system dimension"));
            }
            m = contract_trailing(&m, a);
        }
        Ok(m)
    }
}

/// ρ_k = Tr_{¬o_k}[Υ (I ⊗ A_{k-1} ⊗ … ⊗ A_0)ᵀ], evaluated one slot at a time.
pub fn pt_apply(upsilon: &ProcessChoi, seq: &ControlSequence) -> Result<CMat> {
    for op in &seq.operations {
        if op.d_in() != upsilon.d || op.d_out() != upsilon.d {
            return Err(Error::dim("operation acts on the wrong dimension"));
        }
    }
    upsilon.apply_chois(&seq.chois())
}

/// Row-major multi-indices over `k` slots with `n` choices, slot 0 slowest.
pub fn multi_index(flat: usize, n: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    let mut f = flat;
    for s in (0..k).rev() {
        out[s] = f % n;
        f /= n;
    }
    out
}

pub fn flat_index(mu: &[usize], n: usize) -> usize {
    mu.iter().fold(0, |acc, &m| acc * n + m)
}

/// Υ = d^{-k} Σ_μ ρ^μ ⊗ Δ^{μ_{k-1}ᵀ} ⊗ … ⊗ Δ^{μ_0ᵀ}.
///
/// `final_states[flat_index(μ)]` is the output for basis sequence μ; every
/// step uses the dual frame `duals`.
pub fn pt_linear_inversion(final_states: &[CMat], duals: &DualFrame, steps: usize) -> Result<ProcessChoi> {
    pt_linear_inversion_per_step(final_states, &vec![duals.clone(); steps])
}

/// As [`pt_linear_inversion`], with one dual frame per step (index 0 = t_0).
pub fn pt_linear_inversion_per_step(final_states: &[CMat], duals: &[DualFrame]) -> Result<ProcessChoi> {
    let steps = duals.len();
    if steps == 0 {
        return Err(Error::invalid("need at least one step"));
    }
    let sizes: Vec<usize> = duals.iter().map(|f| f.len()).collect();
    let expected: usize = sizes.iter().product();
    if final_states.len() != expected {
        return Err(Error::invalid(format!(
            "missing multi-indices: expected {expected} final states, got {}",
            final_states.len()
        )));
    }
    let d = final_states[0].nrows();
    let factors: Vec<Vec<CMat>> =
        duals.iter().map(|f| f.duals.iter().map(|x| x.transpose()).collect()).collect();
    ProcessChoi::from_unnormalized(kron_fold(final_states.to_vec(), &factors), steps, d)
}

/// Σ_μ leaf_μ ⊗ F^{μ_{k-1}}_{k-1} ⊗ … ⊗ F^{μ_0}_0 over row-major multi-indices μ
/// (slot 0 slowest), folding the fastest slot first.
pub fn kron_fold(leaves: Vec<CMat>, factors: &[Vec<CMat>]) -> CMat {
    let mut level = leaves;
    for fs in factors.iter().rev() {
        let n = fs.len();
        level = level
            .chunks(n)
            .map(|chunk| {
                let mut acc = kron(&chunk[0], &fs[0]);
                for (m, f) in chunk.iter().zip(fs).skip(1) {
                    acc += kron(m, f);
                }
                acc
            })
            .collect();
    }
    level.pop().expect("non-empty")
}

/// Pauli strings on `q` qubits per leg, with a fixed Pauli block per leg.
fn leg_blocks(q: usize) -> Vec<Vec<Pauli>> {
    (0..1usize << (2 * q)).map(|idx| PauliString::from_index(idx, q).factors).collect()
}

/// Causality rows: for every input leg i_j, all strings that are the
/// identity on later legs, non-identity on i_j, and arbitrary on earlier
/// legs (rhs 0), plus the identity string with rhs 1.
pub fn causality_constraints(steps: usize, d: usize) -> Result<AffineConstraintSet> {
    if steps < 1 {
        return Err(Error::invalid("causality constraints need k ≥ 1"));
    }
    let q = qubit_count(d).ok_or_else(|| Error::invalid(format!("leg dimension {d} is not a power of two")))?;
    let legs = 2 * steps + 1;
    let blocks = leg_blocks(q);
    let id_block = vec![Pauli::I; q];
    let mut strings = Vec::new();
    let mut rhs = Vec::new();
    let mut labels = Vec::new();
    strings.push(PauliString::identity(q * legs));
    rhs.push(1.0);
    labels.push("normalization".to_string());
    for j in (1..=steps).rev() {
        let pos = 2 * (steps - j) + 1;
        let earlier = legs - pos - 1;
        let combos = blocks.len().pow(earlier as u32);
        for b in blocks.iter().skip(1) {
            for flat in 0..combos {
                let mut factors = Vec::with_capacity(q * legs);
                for _ in 0..pos {
                    factors.extend(id_block.iter().copied());
                }
                factors.extend(b.iter().copied());
                for digit in multi_index(flat, blocks.len(), earlier) {
                    factors.extend(blocks[digit].iter().copied());
                }
                let s = PauliString::new(factors);
                labels.push(format!("causal:i{j}:{s}"));
                strings.push(s);
                rhs.push(0.0);
            }
        }
    }
    AffineConstraintSet::pauli(q * legs, strings, rhs, labels)
}

/// Tensor product of the step marginals and the initial state.
pub fn markov_product(upsilon: &ProcessChoi) -> ProcessChoi {
    let mut m = upsilon.step_marginal(upsilon.steps).expect("valid");
    for j in (1..upsilon.steps).rev() {
        m = kron(&m, &upsilon.step_marginal(j).expect("valid"));
    }
    m = kron(&m, &upsilon.initial_state());
    ProcessChoi { matrix: m, steps: upsilon.steps, d: upsilon.d }
}

const ENTROPY_CLIP: f64 = 1e-14;

/// −Tr[ρ log₂ ρ] of a trace-normalized copy of ρ.
pub fn von_neumann_entropy(rho: &CMat) -> f64 {
    let e = eig_hermitized(rho);
    let t: f64 = e.values.iter().map(|v| v.max(0.0)).sum();
    e.values
        .iter()
        .map(|&v| {
            let p = (v.max(0.0) / t).max(ENTROPY_CLIP);
            -p * p.log2()
        })
        .filter(|x| x.is_finite())
        .sum::<f64>()
        .max(0.0)
}

/// S[ρ‖σ] = Tr[ρ(log₂ρ − log₂σ)]; `f64::INFINITY` when supp ρ ⊄ supp σ.
pub fn relative_entropy(rho: &CMat, sigma: &CMat) -> Result<f64> {
    for (name, m) in [("rho", rho), ("sigma", sigma)] {
        let defect = hermitian_defect(m);
        if defect > 1e-8 {
            return Err(Error::NotHermitian(defect));
        }
        if eig_hermitized(m).values[0] < -1e-8 {
            return Err(Error::invalid(format!("{name} is not positive semidefinite")));
        }
    }
    let er = eig_hermitized(rho);
    let es = eig_hermitized(sigma);
    let mut s = 0.0;
    for &v in &er.values {
        if v > ENTROPY_CLIP {
            s += v * v.log2();
        }
    }
    for (j, &sv) in es.values.iter().enumerate() {
        let col = es.vectors.column(j);
        let w = (col.adjoint() * rho * col)[(0, 0)].re;
        if sv <= ENTROPY_CLIP {
            if w > 1e-10 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        s -= w * sv.log2();
    }
    Ok(s.max(0.0))
}

/// S(A) + S(B) − S(AB) in bits, where A is the named legs and B the rest.
pub fn qmi(t: &LabeledTensor, part_a: &[&str]) -> Result<f64> {
    for name in part_a {
        t.leg_index(name)?;
    }
    let rest: Vec<&str> =
        t.legs().iter().map(|l| l.name.as_str()).filter(|n| !part_a.contains(n)).collect();
    let a = t.marginal(part_a)?;
    let b = t.marginal(&rest)?;
    let v = von_neumann_entropy(a.matrix()) + von_neumann_entropy(b.matrix()) - von_neumann_entropy(t.matrix());
    Ok(v.max(0.0))
}

/// QMI between the first `j` steps (legs up to o_{j}) and the rest, for j = 0..k-1.
pub fn temporal_qmi(upsilon: &ProcessChoi) -> Vec<f64> {
    let t = upsilon.labeled();
    let names = leg_names(upsilon.steps);
    (0..upsilon.steps)
        .map(|j| {
            // past: i1..ij, o0..oj
            let past: Vec<&str> = names
                .iter()
                .map(|s| s.as_str())
                .filter(|n| {
                    let idx: usize = n[1..].parse().expect("leg index");
                    (n.starts_with('o') && idx <= j) || (n.starts_with('i') && idx <= j)
                })
                .collect();
            qmi(&t, &past).expect("valid legs")
        })
        .collect()
}
