//! Dense complex linear algebra: vectorization, Kronecker products, partial
//! traces over labeled legs, Hermitian eigendecomposition and Pauli strings.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Vectorization is row-major
//! throughout, so `vec(A X B) = (A ⊗ Bᵀ) vec(X)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn from_rows(rows: &[&[C64]]) -> CMat {
    let r = rows.len();
    let cols = rows.first().map_or(0, |x| x.len());
    CMat::from_fn(r, cols, |i, j| rows[i][j])
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let r = rows.len();
    let cols = rows.first().map_or(0, |x| x.len());
    CMat::from_fn(r, cols, |i, j| c(rows[i][j], 0.0))
}

/// Row-major flattening.
pub fn vectorize(m: &CMat) -> Vec<C64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn devectorize(v: &[C64], rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return Err(Error::dim(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

/// Outer projector |ψ⟩⟨ψ|.
pub fn ket_bra(psi: &[C64]) -> CMat {
    let n = psi.len();
    CMat::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
}

/// Matrix unit |i⟩⟨j| of size n.
pub fn unit(n: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_all(ms: &[CMat]) -> CMat {
    let mut out = CMat::from_element(1, 1, ONE);
    for m in ms {
        out = out.kronecker(m);
    }
    out
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

/// Re Tr[a† b].
pub fn hs_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    hermitian_defect(m) <= tol
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: CMat,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> CMat {
        self.map(|x| x)
    }

    /// U f(D) U†, summing only the columns where f is nonzero.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.vectors.nrows();
        let kept: Vec<(usize, f64)> =
            self.values.iter().map(|&v| f(v)).enumerate().filter(|&(_, s)| s != 0.0).collect();
        let v = faer::Mat::<C64>::from_fn(n, kept.len(), |i, k| self.vectors[(i, kept[k].0)]);
        let scaled = faer::Mat::<C64>::from_fn(n, kept.len(), |i, k| v[(i, k)] * kept[k].1);
        let out = &scaled * v.adjoint();
        CMat::from_fn(n, n, |i, j| out[(i, j)])
    }
}

pub fn hermitian_eig(m: &CMat) -> Result<HermitianEig> {
    if !m.is_square() {
        return Err(Error::dim(format!("eig of {}x{} matrix", m.nrows(), m.ncols())));
    }
    let defect = hermitian_defect(m);
    if defect > 1e-10 * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(eig_hermitized(m))
}

/// Eigendecomposition of (m + m†)/2 without validation, ascending order.
pub(crate) fn eig_hermitized(m: &CMat) -> HermitianEig {
    let n = m.nrows();
    if n < 16 {
        return eig_small(m);
    }
    let h = faer::Mat::<C64>::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    match h.self_adjoint_eigen(faer::Side::Lower) {
        Ok(evd) => {
            let (u, s) = (evd.U(), evd.S());
            let values = (0..n).map(|k| s[k].re).collect();
            let vectors = CMat::from_fn(n, n, |i, j| u[(i, j)]);
            HermitianEig { values, vectors }
        }
        Err(_) => eig_small(m),
    }
}

fn eig_small(m: &CMat) -> HermitianEig {
    let se = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let n = m.nrows();
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| se.eigenvectors[(i, order[j])]);
    HermitianEig { values, vectors }
}

/// Moore–Penrose pseudo-inverse and numerical rank; singular values at or
/// below `rcond`·σ_max are treated as zero.
pub fn pseudo_inverse(m: &CMat, rcond: f64) -> Result<(CMat, usize)> {
    let (r, cols) = (m.nrows(), m.ncols());
    let a = faer::Mat::<C64>::from_fn(r, cols, |i, j| m[(i, j)]);
    let svd = a.thin_svd().map_err(|e| Error::RankDeficient(format!("SVD failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let k = s.dim();
    let smax = (0..k).map(|i| s[i].re).fold(0.0, f64::max);
    let kept: Vec<usize> = (0..k).filter(|&i| s[i].re > rcond * smax && s[i].re > 0.0).collect();
    let vs = faer::Mat::<C64>::from_fn(cols, kept.len(), |i, q| v[(i, kept[q])] / s[kept[q]].re);
    let uk = faer::Mat::<C64>::from_fn(r, kept.len(), |i, q| u[(i, kept[q])]);
    let p = &vs * uk.adjoint();
    Ok((CMat::from_fn(cols, r, |i, j| p[(i, j)]), kept.len()))
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eig_hermitized(m).values[0]
}

/// Principal square root of a PSD matrix; negative eigenvalues clipped.
pub fn psd_sqrt(m: &CMat) -> CMat {
    eig_hermitized(m).map(|x| x.max(0.0).sqrt())
}

/// Partial trace of an operator on a tensor product with leg dimensions
/// `dims`, keeping legs where `keep[l]` is true (order preserved).
pub fn partial_trace(m: &CMat, dims: &[usize], keep: &[bool]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if dims.len() != keep.len() || m.nrows() != total || m.ncols() != total {
        return Err(Error::dim(format!(
            "partial trace: operator {}x{} does not match legs {:?}",
            m.nrows(),
            m.ncols(),
            dims
        )));
    }
    let strides = strides(dims);
    let kept = sub_offsets(dims, &strides, keep, true);
    let traced = sub_offsets(dims, &strides, keep, false);
    let n = kept.len();
    let mut out = CMat::zeros(n, n);
    for (r, &or) in kept.iter().enumerate() {
        for (cc, &oc) in kept.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced {
                acc += m[(or + t, oc + t)];
            }
            out[(r, cc)] = acc;
        }
    }
    Ok(out)
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for l in (0..dims.len().saturating_sub(1)).rev() {
        s[l] = s[l + 1] * dims[l + 1];
    }
    s
}

/// Flat offsets for every multi-index over the selected legs.
fn sub_offsets(dims: &[usize], strides: &[usize], mask: &[bool], select: bool) -> Vec<usize> {
    let mut offs = vec![0usize];
    for l in 0..dims.len() {
        if mask[l] != select {
            continue;
        }
        let mut next = Vec::with_capacity(offs.len() * dims[l]);
        for &o in &offs {
            for v in 0..dims[l] {
                next.push(o + v * strides[l]);
            }
        }
        offs = next;
    }
    offs
}

/// Reorders the tensor legs of an operator: output leg `p` is input leg `perm[p]`.
pub fn permute_legs(m: &CMat, dims: &[usize], perm: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if perm.len() != dims.len() || m.nrows() != total {
        return Err(Error::dim("permute_legs: shape mismatch"));
    }
    let mut seen = vec![false; dims.len()];
    for &p in perm {
        if p >= dims.len() || seen[p] {
            return Err(Error::invalid("permute_legs: not a permutation"));
        }
        seen[p] = true;
    }
    let in_strides = strides(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    // offset in the old layout for each flat index of the new layout
    let mut map = vec![0usize];
    for (p, &old) in perm.iter().enumerate() {
        let mut next = Vec::with_capacity(map.len() * new_dims[p]);
        for &o in &map {
            for v in 0..new_dims[p] {
                next.push(o + v * in_strides[old]);
            }
        }
        map = next;
    }
    Ok(CMat::from_fn(total, total, |i, j| m[(map[i], map[j])]))
}

/// Contracts the trailing tensor factor of `m` (size s = `op.nrows()`)
/// against `op` entrywise: out[a,b] = Σ_{x,y} m[a·s+x, b·s+y] op[x,y].
/// Equivalent to Tr_last[m (I ⊗ opᵀ)].
pub fn contract_trailing(m: &CMat, op: &CMat) -> CMat {
    let s = op.nrows();
    let r = m.nrows() / s;
    let mut out = CMat::zeros(r, r);
    for a in 0..r {
        for b in 0..r {
            let mut acc = ZERO;
            for x in 0..s {
                for y in 0..s {
                    acc += m[(a * s + x, b * s + y)] * op[(x, y)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Traces out the trailing tensor factor of dimension `s`.
pub fn trace_trailing(m: &CMat, s: usize) -> CMat {
    let r = m.nrows() / s;
    CMat::from_fn(r, r, |a, b| (0..s).map(|x| m[(a * s + x, b * s + x)]).sum())
}

/// Traces out the leading tensor factor of dimension `s`.
pub fn trace_leading(m: &CMat, s: usize) -> CMat {
    let r = m.nrows() / s;
    CMat::from_fn(r, r, |a, b| (0..s).map(|x| m[(x * r + a, x * r + b)]).sum())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leg {
    pub name: String,
    pub dim: usize,
}

/// An operator on an ordered list of named legs.
#[derive(Debug, Clone)]
pub struct LabeledTensor {
    legs: Vec<Leg>,
    matrix: CMat,
}

impl LabeledTensor {
    pub fn new(legs: Vec<(String, usize)>, matrix: CMat) -> Result<Self> {
        let legs: Vec<Leg> = legs.into_iter().map(|(name, dim)| Leg { name, dim }).collect();
        for (i, l) in legs.iter().enumerate() {
            if legs[..i].iter().any(|o| o.name == l.name) {
                return Err(Error::invalid(format!("duplicate leg `{}`", l.name)));
            }
        }
        let total: usize = legs.iter().map(|l| l.dim).product();
        if matrix.nrows() != total || matrix.ncols() != total {
            return Err(Error::dim(format!(
                "legs imply dimension {total}, matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(LabeledTensor { legs, matrix })
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn dims(&self) -> Vec<usize> {
        self.legs.iter().map(|l| l.dim).collect()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn leg_index(&self, name: &str) -> Result<usize> {
        self.legs
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLeg(name.to_string()))
    }

    pub fn partial_trace(&self, discard: &[&str]) -> Result<LabeledTensor> {
        let mut keep = vec![true; self.legs.len()];
        for name in discard {
            keep[self.leg_index(name)?] = false;
        }
        let m = partial_trace(&self.matrix, &self.dims(), &keep)?;
        let legs = self
            .legs
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(l, _)| (l.name.clone(), l.dim))
            .collect();
        LabeledTensor::new(legs, m)
    }

    /// Keeps only the named legs, in their current order.
    pub fn marginal(&self, keep: &[&str]) -> Result<LabeledTensor> {
        for name in keep {
            self.leg_index(name)?;
        }
        let discard: Vec<&str> = self
            .legs
            .iter()
            .map(|l| l.name.as_str())
            .filter(|n| !keep.contains(n))
            .collect();
        self.partial_trace(&discard)
    }

    pub fn permuted(&self, order: &[&str]) -> Result<LabeledTensor> {
        if order.len() != self.legs.len() {
            return Err(Error::invalid("permutation must name every leg"));
        }
        let perm = order.iter().map(|n| self.leg_index(n)).collect::<Result<Vec<_>>>()?;
        let m = permute_legs(&self.matrix, &self.dims(), &perm)?;
        let legs = perm.iter().map(|&p| (self.legs[p].name.clone(), self.legs[p].dim)).collect();
        LabeledTensor::new(legs, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> CMat {
        match self {
            Pauli::I => identity(2),
            Pauli::X => from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
            Pauli::Y => from_rows(&[&[ZERO, -I], &[I, ZERO]]),
            Pauli::Z => from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]),
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Entry ⟨r| σ |r ⊕ flip⟩.
    fn phase(self, r: usize) -> C64 {
        match self {
            Pauli::I | Pauli::X => ONE,
            Pauli::Y => {
                if r == 0 {
                    -I
                } else {
                    I
                }
            }
            Pauli::Z => {
                if r == 0 {
                    ONE
                } else {
                    -ONE
                }
            }
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis; factor 0 is the most significant qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    pub factors: Vec<Pauli>,
}

impl PauliString {
    pub fn new(factors: Vec<Pauli>) -> Self {
        PauliString { factors }
    }

    pub fn identity(n: usize) -> Self {
        PauliString { factors: vec![Pauli::I; n] }
    }

    /// Base-4 digits of `index`, most significant factor first.
    pub fn from_index(mut index: usize, n: usize) -> Self {
        let mut factors = vec![Pauli::I; n];
        for q in (0..n).rev() {
            factors[q] = Pauli::ALL[index % 4];
            index /= 4;
        }
        PauliString { factors }
    }

    pub fn index(&self) -> usize {
        self.factors.iter().fold(0, |acc, p| acc * 4 + *p as usize)
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|ch| match ch {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::invalid(format!("bad Pauli label `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliString::new)
    }

    pub fn label(&self) -> String {
        self.factors.iter().map(|p| p.symbol()).collect()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.factors.len()
    }

    pub fn is_identity(&self) -> bool {
        self.factors.iter().all(|&p| p == Pauli::I)
    }

    fn flip_mask(&self) -> usize {
        let n = self.factors.len();
        self.factors
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flips())
            .fold(0, |m, (q, _)| m | (1 << (n - 1 - q)))
    }

    /// Nonzero entry of row `r`: (column, value).
    fn row_entry(&self, r: usize, mask: usize) -> (usize, C64) {
        let n = self.factors.len();
        let mut val = ONE;
        for (q, p) in self.factors.iter().enumerate() {
            let bit = (r >> (n - 1 - q)) & 1;
            val *= p.phase(bit);
        }
        (r ^ mask, val)
    }

    pub fn matrix(&self) -> CMat {
        let d = self.dim();
        let mask = self.flip_mask();
        let mut m = CMat::zeros(d, d);
        for r in 0..d {
            let (col, v) = self.row_entry(r, mask);
            m[(r, col)] = v;
        }
        m
    }

    /// (mask, phases) with P[r, r ^ mask] = phases[r].
    pub fn sparse_form(&self) -> (usize, Vec<C64>) {
        let mask = self.flip_mask();
        let phases = (0..self.dim()).map(|r| self.row_entry(r, mask).1).collect();
        (mask, phases)
    }

    /// Tr[op · P] without forming P.
    pub fn trace_with(&self, op: &CMat) -> C64 {
        let d = self.dim();
        let mask = self.flip_mask();
        let mut acc = ZERO;
        // Tr[op P] = Σ_r Σ_c op[c, r] P[r, c]
        for r in 0..d {
            let (col, v) = self.row_entry(r, mask);
            acc += op[(col, r)] * v;
        }
        acc
    }

    /// op += scale · P.
    pub fn add_scaled(&self, op: &mut CMat, scale: f64) {
        let d = self.dim();
        let mask = self.flip_mask();
        for r in 0..d {
            let (col, v) = self.row_entry(r, mask);
            op[(r, col)] += v * scale;
        }
    }
}

impl std::fmt::Display for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn pauli_string_matrix(p: &PauliString) -> CMat {
    p.matrix()
}

/// Unnormalized coefficient Re Tr[op · P].
pub fn pauli_coefficient(op: &CMat, p: &PauliString) -> f64 {
    p.trace_with(op).re
}

/// All 4ⁿ unnormalized coefficients, indexed by `PauliString::index`.
pub fn pauli_coefficients(op: &CMat, qubits: usize) -> Vec<f64> {
    (0..1usize << (2 * qubits))
        .map(|idx| pauli_coefficient(op, &PauliString::from_index(idx, qubits)))
        .collect()
}

pub fn from_pauli_coefficients(coeffs: &[f64], qubits: usize) -> CMat {
    let d = 1usize << qubits;
    let mut m = CMat::zeros(d, d);
    for (idx, &cf) in coeffs.iter().enumerate() {
        if cf != 0.0 {
            PauliString::from_index(idx, qubits).add_scaled(&mut m, cf / d as f64);
        }
    }
    m
}

pub fn qubit_count(dim: usize) -> Option<usize> {
    if dim.is_power_of_two() {
        Some(dim.trailing_zeros() as usize)
    } else {
        None
    }
}
