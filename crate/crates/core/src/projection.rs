//! Euclidean projection onto the intersection of the PSD cone with an
//! affine subspace `{X : Tr[F_r X] = b_r}`.
//!
//! Two solvers are provided: Dykstra's alternating projections and a dual
//! method that maximizes the concave dual `θ(λ) = −½‖P₊(X₀ + A†λ)‖² + bᵀλ`
//! with L-BFGS, where the gradient is `b − A P₊(X₀ + A†λ)`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::algebra::{
    c, eig_hermitized, frobenius, hermitize, hs_inner, identity, qubit_count, CMat, PauliString, C64,
};
use crate::error::{Error, Result};
use crate::optim::{lbfgs, LbfgsConfig, LbfgsStatus};
use crate::random::{random_hermitian, substream};

#[derive(Debug, Clone)]
enum Rows {
    Pauli { qubits: usize, strings: Vec<PauliString>, sparse: Vec<(usize, Vec<C64>)> },
    Dense(Vec<CMat>),
}

#[derive(Debug, Clone)]
enum Gram {
    /// AA† = s·I.
    Scaled(f64),
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

/// Affine constraints `Tr[F_r X] = b_r` with Hermitian functionals `F_r`.
#[derive(Debug, Clone)]
pub struct AffineConstraintSet {
    dim: usize,
    rows: Rows,
    rhs: Vec<f64>,
    labels: Vec<String>,
    gram: Gram,
}

impl AffineConstraintSet {
    /// Rows given as Pauli strings on `qubits` qubits; duplicates removed.
    pub fn pauli(qubits: usize, strings: Vec<PauliString>, rhs: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if strings.len() != rhs.len() || labels.len() != rhs.len() {
            return Err(Error::dim("rows, rhs and labels must have equal length"));
        }
        let mut seen = std::collections::HashMap::new();
        let (mut s2, mut r2, mut l2) = (Vec::new(), Vec::new(), Vec::new());
        for ((s, r), l) in strings.into_iter().zip(rhs).zip(labels) {
            if s.len() != qubits {
                return Err(Error::dim(format!("Pauli row {s} has wrong length")));
            }
            if let Some(&prev) = seen.get(&s.index()) {
                if (r2[prev] - r) != 0.0 {
                    return Err(Error::invalid(format!("conflicting rhs for duplicate row {s}")));
                }
                continue;
            }
            check_finite(r)?;
            seen.insert(s.index(), s2.len());
            s2.push(s);
            r2.push(r);
            l2.push(l);
        }
        let dim = 1usize << qubits;
        Ok(AffineConstraintSet {
            dim,
            rows: Rows::Pauli { qubits, sparse: s2.iter().map(|s| s.sparse_form()).collect(), strings: s2 },
            rhs: r2,
            labels: l2,
            gram: Gram::Scaled(dim as f64),
        })
    }

    /// Rows given as explicit Hermitian matrices; rejects dependent rows.
    pub fn dense(rows: Vec<CMat>, rhs: Vec<f64>) -> Result<Self> {
        if rows.len() != rhs.len() || rows.is_empty() {
            return Err(Error::dim("need one rhs per row"));
        }
        let dim = rows[0].nrows();
        for r in &rows {
            if r.nrows() != dim || !r.is_square() {
                return Err(Error::dim("constraint rows differ in shape"));
            }
        }
        for &b in &rhs {
            check_finite(b)?;
        }
        let m = rows.len();
        let g = DMatrix::from_fn(m, m, |i, j| hs_inner(&rows[i], &rows[j]));
        let scale = (0..m).map(|i| g[(i, i)]).fold(0.0, f64::max);
        let chol = nalgebra::Cholesky::new(g.clone())
            .filter(|ch| {
                let l = ch.l_dirty();
                (0..m).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * scale)
            })
            .ok_or_else(|| Error::RankDeficient("constraint rows are linearly dependent".into()))?;
        let labels = (0..m).map(|i| format!("row{i}")).collect();
        Ok(AffineConstraintSet { dim, rows: Rows::Dense(rows), rhs, labels, gram: Gram::Cholesky(chol) })
    }

    /// Tr X = 1 on an n×n operator.
    pub fn unit_trace(dim: usize) -> Self {
        match qubit_count(dim) {
            Some(q) => AffineConstraintSet::pauli(q, vec![PauliString::identity(q)], vec![1.0], vec!["trace".into()])
                .expect("valid"),
            None => AffineConstraintSet::dense(vec![identity(dim)], vec![1.0]).expect("valid"),
        }
    }

    /// Trace-1 Choi (output ⊗ input, qubit legs) of a trace-preserving channel.
    pub fn trace_preserving(qubits_in: usize, qubits_out: usize) -> Self {
        let q = qubits_in + qubits_out;
        let mut strings = Vec::new();
        let mut rhs = Vec::new();
        let mut labels = Vec::new();
        for p in 0..1usize << (2 * qubits_in) {
            let inp = PauliString::from_index(p, qubits_in);
            let mut factors = vec![crate::algebra::Pauli::I; qubits_out];
            factors.extend(inp.factors.iter().copied());
            let s = PauliString::new(factors);
            rhs.push(if p == 0 { 1.0 } else { 0.0 });
            labels.push(format!("tp:{s}"));
            strings.push(s);
        }
        AffineConstraintSet::pauli(q, strings, rhs, labels).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn pauli_rows(&self) -> Option<&[PauliString]> {
        match &self.rows {
            Rows::Pauli { strings, .. } => Some(strings),
            Rows::Dense(_) => None,
        }
    }

    /// Complex values Tr[F_r X]; real when X is Hermitian.
    pub fn apply_complex(&self, x: &CMat) -> Vec<C64> {
        match &self.rows {
            Rows::Pauli { sparse, .. } => sparse
                .iter()
                .map(|(mask, ph)| ph.iter().enumerate().map(|(r, v)| x[(r ^ mask, r)] * v).sum())
                .collect(),
            Rows::Dense(rows) => rows.iter().map(|f| (f * x).trace()).collect(),
        }
    }

    /// A·vec(X) for Hermitian X.
    pub fn apply(&self, x: &CMat) -> Vec<f64> {
        self.apply_complex(x).into_iter().map(|v| v.re).collect()
    }

    /// A†λ = Σ λ_r F_r.
    pub fn adjoint(&self, lambda: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        match &self.rows {
            Rows::Pauli { sparse, .. } => {
                for ((mask, ph), &l) in sparse.iter().zip(lambda) {
                    if l != 0.0 {
                        for (r, v) in ph.iter().enumerate() {
                            out[(r, r ^ mask)] += v * l;
                        }
                    }
                }
            }
            Rows::Dense(rows) => {
                for (f, &l) in rows.iter().zip(lambda) {
                    out += f * c(l, 0.0);
                }
            }
        }
        out
    }

    /// A·vec(X) − b.
    pub fn residual(&self, x: &CMat) -> Vec<f64> {
        self.apply(x).iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }

    pub fn residual_inf(&self, x: &CMat) -> f64 {
        self.residual(x).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn gram_solve(&self, v: &[f64]) -> Vec<f64> {
        match &self.gram {
            Gram::Scaled(s) => v.iter().map(|x| x / s).collect(),
            Gram::Cholesky(ch) => ch.solve(&DVector::from_column_slice(v)).iter().copied().collect(),
        }
    }

    /// Largest eigenvalue of AA†, used to scale first quasi-Newton steps.
    fn gram_norm(&self) -> f64 {
        match &self.gram {
            Gram::Scaled(s) => *s,
            Gram::Cholesky(ch) => {
                let g = ch.l() * ch.l().transpose();
                g.symmetric_eigen().eigenvalues.iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// Rows as a dense m × n² matrix acting on row-major vec(X).
    pub fn dense_matrix(&self) -> CMat {
        let n2 = self.dim * self.dim;
        let mut a = CMat::zeros(self.len(), n2);
        let fs: Vec<CMat> = match &self.rows {
            Rows::Pauli { strings, .. } => strings.iter().map(|s| s.matrix()).collect(),
            Rows::Dense(rows) => rows.clone(),
        };
        for (r, f) in fs.iter().enumerate() {
            for (i, v) in crate::algebra::vectorize(f).into_iter().enumerate() {
                a[(r, i)] = v.conj();
            }
        }
        a
    }

    pub fn qubits(&self) -> Option<usize> {
        match &self.rows {
            Rows::Pauli { qubits, .. } => Some(*qubits),
            Rows::Dense(_) => None,
        }
    }
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("non-finite constraint value"))
    }
}

/// U max(D, 0) U†.
pub fn project_psd(m: &CMat) -> CMat {
    eig_hermitized(m).map(|x| x.max(0.0))
}

/// Nearest point of {x ≥ 0, Σx = total}.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - total) / (j + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Nearest density matrix (PSD, unit trace) by simplex-projecting the spectrum.
pub fn project_density(m: &CMat) -> CMat {
    let e = eig_hermitized(m);
    let values = project_simplex(&e.values, 1.0);
    crate::algebra::HermitianEig { values, vectors: e.vectors }.reconstruct()
}

/// Projection of a matrix onto the affine set.
pub fn project_affine_matrix(x: &CMat, set: &AffineConstraintSet) -> CMat {
    let r = set.residual(x);
    let w = set.gram_solve(&r);
    x - set.adjoint(&w)
}

/// [I − A†(AA†)⁻¹A]v + A†(AA†)⁻¹b for a dense full-row-rank A.
pub fn project_affine(v: &DVector<C64>, a: &CMat, b: &DVector<C64>) -> Result<DVector<C64>> {
    if a.ncols() != v.len() || a.nrows() != b.len() {
        return Err(Error::dim("project_affine shape mismatch"));
    }
    let g = a * a.adjoint();
    let lu = g.clone().lu();
    let ev = eig_hermitized(&g).values;
    let (smin, smax) = (ev[0], ev[ev.len() - 1]);
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::RankDeficient("constraint matrix is not full row rank".into()));
    }
    let r = a * v - b;
    let w = lu.solve(&r).ok_or_else(|| Error::RankDeficient("singular Gram matrix".into()))?;
    Ok(v - a.adjoint() * w)
}

#[derive(Debug, Clone)]
pub struct ConicProblem<'a> {
    pub target: CMat,
    pub constraints: &'a AffineConstraintSet,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Dual starting point for the conic method.
    pub warm_start: Option<Vec<f64>>,
}

impl<'a> ConicProblem<'a> {
    pub fn new(target: CMat, constraints: &'a AffineConstraintSet) -> Self {
        ConicProblem { target: hermitize(&target), constraints, tolerance: 1e-8, max_iterations: 5000, warm_start: None }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_warm_start(mut self, lambda: Vec<f64>) -> Self {
        self.warm_start = Some(lambda);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionFailure {
    MaxIterations,
    LineSearch,
    Stagnation,
}

#[derive(Debug, Clone)]
pub struct ProjectionReport {
    pub solution: CMat,
    pub eig_count: usize,
    pub wall_time: Duration,
    pub converged: bool,
    pub failure: Option<ProjectionFailure>,
    pub iterations: usize,
    /// ‖A·vec(solution) − b‖∞.
    pub final_constraint_residual: f64,
    pub min_eigenvalue: f64,
    /// Dual multipliers (conic method only).
    pub dual: Option<Vec<f64>>,
    /// ½‖solution − target‖².
    pub primal_value: f64,
    /// Dual value including the constant ½‖target‖² (conic method only).
    pub dual_value: Option<f64>,
}

impl ProjectionReport {
    pub fn duality_gap(&self) -> Option<f64> {
        self.dual_value.map(|d| self.primal_value - d)
    }
}

fn finish(
    p: &ConicProblem,
    solution: CMat,
    eig_count: usize,
    start: Instant,
    failure: Option<ProjectionFailure>,
    iterations: usize,
    dual: Option<(Vec<f64>, f64)>,
) -> ProjectionReport {
    let solution = hermitize(&solution);
    let final_constraint_residual = p.constraints.residual_inf(&solution);
    let min_eigenvalue = eig_hermitized(&solution).values[0];
    let diff = &solution - &p.target;
    let primal_value = 0.5 * hs_inner(&diff, &diff);
    let (dual, dual_value) = match dual {
        Some((l, v)) => (Some(l), Some(v)),
        None => (None, None),
    };
    ProjectionReport {
        solution,
        eig_count,
        wall_time: start.elapsed(),
        converged: failure.is_none(),
        failure,
        iterations,
        final_constraint_residual,
        min_eigenvalue,
        dual,
        primal_value,
        dual_value,
    }
}

/// Dykstra's alternating projections with correction terms on both sets.
///
/// Stops once successive PSD iterates move less than `tolerance` and the
/// PSD iterate lies within `tolerance` of the affine iterate.
pub fn dykstra(p: &ConicProblem) -> ProjectionReport {
    let start = Instant::now();
    let set = p.constraints;
    let n = p.target.nrows();
    let mut x = p.target.clone();
    let mut pa = CMat::zeros(n, n);
    let mut qp = CMat::zeros(n, n);
    let mut eigs = 0;
    for it in 0..p.max_iterations {
        let y = project_affine_matrix(&(&x + &pa), set);
        pa = &x + &pa - &y;
        let z = &y + &qp;
        let xn = project_psd(&z);
        eigs += 1;
        qp = z - &xn;
        let change = frobenius(&(&xn - &x));
        let gap = frobenius(&(&xn - &y));
        x = xn;
        if change <= p.tolerance && gap <= p.tolerance {
            return finish(p, x, eigs, start, None, it + 1, None);
        }
    }
    finish(p, x, eigs, start, Some(ProjectionFailure::MaxIterations), p.max_iterations, None)
}

/// θ(λ) (without the constant ½‖X₀‖²), its gradient b − Aυ(λ), and υ(λ).
pub fn dual_value_and_gradient(target: &CMat, set: &AffineConstraintSet, lambda: &[f64]) -> (f64, Vec<f64>, CMat) {
    let w = target + set.adjoint(lambda);
    let v = project_psd(&w);
    let av = set.apply(&v);
    let theta = -0.5 * hs_inner(&v, &v) + set.rhs().iter().zip(lambda).map(|(b, l)| b * l).sum::<f64>();
    let grad = set.rhs().iter().zip(&av).map(|(b, a)| b - a).collect();
    (theta, grad, v)
}

/// Projection by maximizing the dual with L-BFGS.
pub fn conic_project(p: &ConicProblem) -> ProjectionReport {
    let start = Instant::now();
    let set = p.constraints;
    let m = set.len();
    let bnorm = set.rhs().iter().map(|b| b * b).sum::<f64>().sqrt();
    let cfg = LbfgsConfig {
        memory: 10,
        max_iterations: p.max_iterations,
        gradient_tolerance: p.tolerance * bnorm.max(1.0),
        initial_scale: Some(1.0 / set.gram_norm()),
        ..Default::default()
    };
    let mut eigs = 0usize;
    let lambda0 = p.warm_start.clone().filter(|l| l.len() == m).unwrap_or_else(|| vec![0.0; m]);
    let res = lbfgs(
        |l| {
            eigs += 1;
            let (theta, g, _) = dual_value_and_gradient(&p.target, set, l);
            (-theta, g.iter().map(|x| -x).collect())
        },
        lambda0,
        &cfg,
    );
    let (theta, _, v) = dual_value_and_gradient(&p.target, set, &res.x);
    eigs += 1;
    let failure = match res.status {
        LbfgsStatus::Converged => None,
        LbfgsStatus::MaxIterations => Some(ProjectionFailure::MaxIterations),
        LbfgsStatus::LineSearchFailed => Some(ProjectionFailure::LineSearch),
        LbfgsStatus::Stagnated => Some(ProjectionFailure::Stagnation),
    };
    let constant = 0.5 * hs_inner(&p.target, &p.target);
    finish(p, v, eigs, start, failure, res.iterations, Some((res.x, theta + constant)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Unit-trace PSD operators on `qubits` qubits.
    Qst { qubits: usize },
    /// Trace-preserving Choi of a channel on `qubits` qubits.
    Qpt { qubits: usize },
    /// Causal process tensor of a single qubit over `steps` steps.
    Ptt { steps: usize },
}

impl Regime {
    pub fn constraints(&self) -> AffineConstraintSet {
        match *self {
            Regime::Qst { qubits } => AffineConstraintSet::unit_trace(1 << qubits),
            Regime::Qpt { qubits } => AffineConstraintSet::trace_preserving(qubits, qubits),
            Regime::Ptt { steps } => crate::process_tensor::causality_constraints(steps, 2).expect("steps ≥ 1"),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Regime::Qst { qubits } => 1 << qubits,
            Regime::Qpt { qubits } => 1 << (2 * qubits),
            Regime::Ptt { steps } => 1 << (2 * steps + 1),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Regime::Qst { qubits } => format!("QST{}", 1 << qubits),
            Regime::Qpt { qubits } => format!("QPT{}", 1 << (2 * qubits)),
            Regime::Ptt { steps } => format!("PTT{}", 1 << (2 * steps + 1)),
        }
    }

    pub fn standard() -> [Regime; 3] {
        [Regime::Qst { qubits: 2 }, Regime::Qpt { qubits: 2 }, Regime::Ptt { steps: 2 }]
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub regime: String,
    pub method: &'static str,
    pub n: usize,
    pub mean_time_s: f64,
    pub mean_eigs: f64,
    pub convergence_rate: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub rows: Vec<BenchmarkRow>,
    /// Per regime: max Frobenius distance between the two methods' solutions.
    pub max_disagreement: Vec<(String, f64)>,
}

impl BenchmarkRun {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("regime,method,n,mean_time_s,mean_eigs,convergence_rate\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.6e},{:.3},{:.4}\n",
                r.regime, r.method, r.n, r.mean_time_s, r.mean_eigs, r.convergence_rate
            ));
        }
        s
    }
}

/// Projects `samples` Gaussian Hermitian matrices per regime with both
/// methods. Sample `i` of regime `r` uses substream `(seed, r·2³² + i)`.
pub fn benchmark_projections(samples: usize, regimes: &[Regime], seed: u64, tolerance: f64) -> BenchmarkRun {
    let mut rows = Vec::new();
    let mut max_disagreement = Vec::new();
    for (ri, regime) in regimes.iter().enumerate() {
        let set = regime.constraints();
        let n = regime.dim();
        let results: Vec<(ProjectionReport, ProjectionReport)> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut r = substream(seed, ((ri as u64) << 32) + i as u64);
                let target = random_hermitian(&mut r, n);
                let prob = ConicProblem::new(target, &set).with_tolerance(tolerance).with_max_iterations(100_000);
                (dykstra(&prob), conic_project(&prob))
            })
            .collect();
        let mut worst = 0.0f64;
        for (d, cn) in &results {
            worst = worst.max(frobenius(&(&d.solution - &cn.solution)));
        }
        max_disagreement.push((regime.name(), worst));
        for (method, pick) in [("dykstra", 0usize), ("conic", 1usize)] {
            let reps: Vec<&ProjectionReport> =
                results.iter().map(|(d, cn)| if pick == 0 { d } else { cn }).collect();
            let k = reps.len().max(1) as f64;
            rows.push(BenchmarkRow {
                regime: regime.name(),
                method,
                n,
                mean_time_s: reps.iter().map(|r| r.wall_time.as_secs_f64()).sum::<f64>() / k,
                mean_eigs: reps.iter().map(|r| r.eig_count as f64).sum::<f64>() / k,
                convergence_rate: reps.iter().filter(|r| r.converged).count() as f64 / k,
            });
        }
    }
    BenchmarkRun { rows, max_disagreement }
}
