//! States, POVMs, channels (Choi, superoperator, Pauli transfer matrix),
//! dual frames and linear-inversion tomography of states and channels.
//!
//! Choi matrices are ordered output ⊗ input:
//! `Ĉ = Σ_ij E(|i⟩⟨j|) ⊗ |i⟩⟨j|`, so `E(ρ) = Tr_in[(I ⊗ ρᵀ) Ĉ]`.

use nalgebra::{DMatrix, DVector};

use crate::algebra::{
    c, contract_trailing, devectorize, eig_hermitized, frobenius, hermitian_defect, identity,
    ket_bra, kron, max_abs, pseudo_inverse, trace_leading, unit, vectorize, CMat, PauliString, C64, ZERO,
};
use crate::error::{Error, Result};

/// Eigenvalue floor tolerated when validating states and effects.
pub const PSD_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        validate_state(&m)?;
        Ok(DensityMatrix(m))
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        DensityMatrix::new(ket_bra(psi))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        DensityMatrix(unit(d, i, i))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix(identity(d) / c(d as f64, 0.0))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

pub fn validate_state(m: &CMat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim("state must be square"));
    }
    let defect = hermitian_defect(m);
    if defect > 1e-9 {
        return Err(Error::NotHermitian(defect));
    }
    let tr = m.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::invalid(format!("state trace {tr} differs from 1")));
    }
    let lo = eig_hermitized(m).values[0];
    if lo < PSD_FLOOR {
        return Err(Error::invalid(format!("state has eigenvalue {lo:.3e}")));
    }
    Ok(())
}

/// A POVM with effects grouped into measurement settings.
///
/// Sampling draws one multinomial per setting; effects of different
/// settings carry the setting weight (e.g. 1/3 each for three Pauli bases).
#[derive(Debug, Clone)]
pub struct Povm {
    effects: Vec<CMat>,
    settings: Vec<Vec<usize>>,
}

impl Povm {
    pub fn new(effects: Vec<CMat>) -> Result<Self> {
        let all = (0..effects.len()).collect();
        Povm::with_settings(effects, vec![all])
    }

    pub fn with_settings(effects: Vec<CMat>, settings: Vec<Vec<usize>>) -> Result<Self> {
        let d = effects.first().ok_or_else(|| Error::invalid("empty POVM"))?.nrows();
        let mut sum = CMat::zeros(d, d);
        for (i, e) in effects.iter().enumerate() {
            if e.nrows() != d || !e.is_square() {
                return Err(Error::dim(format!("effect {i} has wrong shape")));
            }
            if hermitian_defect(e) > 1e-9 || eig_hermitized(e).values[0] < PSD_FLOOR {
                return Err(Error::invalid(format!("effect {i} is not PSD")));
            }
            sum += e;
        }
        if frobenius(&(sum - identity(d))) > 1e-9 {
            return Err(Error::invalid("effects do not sum to identity"));
        }
        let mut seen = vec![false; effects.len()];
        for s in &settings {
            for &i in s {
                if i >= effects.len() || seen[i] {
                    return Err(Error::invalid("settings must partition the effects"));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|x| !x) {
            return Err(Error::invalid("settings must partition the effects"));
        }
        Ok(Povm { effects, settings })
    }

    /// Six Pauli eigenprojectors weighted 1/3, ordered
    /// |+⟩, |+i⟩, |0⟩, |−⟩, |−i⟩, |1⟩; settings X, Y, Z.
    pub fn pauli6() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let kets: [[C64; 2]; 6] = [
            [c(s, 0.0), c(s, 0.0)],
            [c(s, 0.0), c(0.0, s)],
            [c(1.0, 0.0), ZERO],
            [c(s, 0.0), c(-s, 0.0)],
            [c(s, 0.0), c(0.0, -s)],
            [ZERO, c(1.0, 0.0)],
        ];
        let effects = kets.iter().map(|k| ket_bra(k) / c(3.0, 0.0)).collect();
        Povm::with_settings(effects, vec![vec![0, 3], vec![1, 4], vec![2, 5]])
            .expect("Pauli POVM is valid")
    }

    /// Projective measurement in the computational basis.
    pub fn computational(d: usize) -> Self {
        Povm::new((0..d).map(|i| unit(d, i, i)).collect()).expect("valid")
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    pub fn settings(&self) -> &[Vec<usize>] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].nrows()
    }

    /// Born probabilities Tr[Π_i ρ].
    pub fn probabilities(&self, rho: &CMat) -> Vec<f64> {
        self.effects.iter().map(|e| (e * rho).trace().re).collect()
    }

    /// Replaces every effect Π by N†(Π) for a measurement-noise channel N.
    pub fn noisy(&self, noise: &ChannelChoi) -> Result<Povm> {
        let effects = self.effects.iter().map(|e| noise.apply_adjoint(e)).collect::<Result<_>>()?;
        Povm::with_settings(effects, self.settings.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Tr Ĉ = d_in.
    Unnormalized,
    /// Tr Ĉ = 1.
    TraceOne,
}

#[derive(Debug, Clone)]
pub struct ChannelChoi {
    matrix: CMat,
    d_in: usize,
    d_out: usize,
    normalization: Normalization,
}

impl ChannelChoi {
    pub fn from_matrix(matrix: CMat, d_in: usize, d_out: usize, normalization: Normalization) -> Result<Self> {
        if matrix.nrows() != d_in * d_out || !matrix.is_square() {
            return Err(Error::dim(format!(
                "Choi of {}x{} channel must be {}x{}",
                d_in,
                d_out,
                d_in * d_out,
                d_in * d_out
            )));
        }
        Ok(ChannelChoi { matrix, d_in, d_out, normalization })
    }

    pub fn from_superop(s: &CMat, d_in: usize, d_out: usize) -> Result<Self> {
        if s.nrows() != d_out * d_out || s.ncols() != d_in * d_in {
            return Err(Error::dim("superoperator shape mismatch"));
        }
        let n = d_in * d_out;
        let m = CMat::from_fn(n, n, |r, col| {
            let (a, i) = (r / d_in, r % d_in);
            let (b, j) = (col / d_in, col % d_in);
            s[(a * d_out + b, i * d_in + j)]
        });
        Ok(ChannelChoi { matrix: m, d_in, d_out, normalization: Normalization::Unnormalized })
    }

    pub fn from_unitary(u: &CMat) -> Self {
        let v = DVector::from_vec(vectorize(u));
        let m = &v * v.adjoint();
        ChannelChoi { matrix: m, d_in: u.ncols(), d_out: u.nrows(), normalization: Normalization::Unnormalized }
    }

    pub fn from_kraus(kraus: &[CMat]) -> Result<Self> {
        let k0 = kraus.first().ok_or_else(|| Error::invalid("no Kraus operators"))?;
        let (d_out, d_in) = (k0.nrows(), k0.ncols());
        let mut m = CMat::zeros(d_in * d_out, d_in * d_out);
        for k in kraus {
            if k.nrows() != d_out || k.ncols() != d_in {
                return Err(Error::dim("Kraus operators differ in shape"));
            }
            let v = DVector::from_vec(vectorize(k));
            m += &v * v.adjoint();
        }
        Ok(ChannelChoi { matrix: m, d_in, d_out, normalization: Normalization::Unnormalized })
    }

    pub fn identity(d: usize) -> Self {
        ChannelChoi::from_unitary(&identity(d))
    }

    /// ρ ↦ Tr[ρ]·σ.
    pub fn replacement(sigma: &CMat, d_in: usize) -> Self {
        let m = kron(sigma, &identity(d_in));
        ChannelChoi { matrix: m, d_in, d_out: sigma.nrows(), normalization: Normalization::Unnormalized }
    }

    /// ρ ↦ (1−p)ρ + p·Tr[ρ]·I/d.
    pub fn depolarizing(d: usize, p: f64) -> Self {
        let id = ChannelChoi::identity(d).matrix;
        let full = kron(&identity(d), &identity(d)) / c(d as f64, 0.0);
        let m = id * c(1.0 - p, 0.0) + full * c(p, 0.0);
        ChannelChoi { matrix: m, d_in: d, d_out: d, normalization: Normalization::Unnormalized }
    }

    /// Qubit amplitude damping with decay probability γ.
    pub fn amplitude_damping(gamma: f64) -> Self {
        let k0 = crate::algebra::from_real_rows(&[&[1.0, 0.0], &[0.0, (1.0 - gamma).sqrt()]]);
        let k1 = crate::algebra::from_real_rows(&[&[0.0, gamma.sqrt()], &[0.0, 0.0]]);
        ChannelChoi::from_kraus(&[k0, k1]).expect("valid")
    }

    /// Qubit dephasing: ρ ↦ (1−p)ρ + p ZρZ.
    pub fn dephasing(p: f64) -> Self {
        let k0 = identity(2) * c((1.0 - p).sqrt(), 0.0);
        let k1 = crate::algebra::Pauli::Z.matrix() * c(p.sqrt(), 0.0);
        ChannelChoi::from_kraus(&[k0, k1]).expect("valid")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Choi with Tr = d_in.
    pub fn unnormalized(&self) -> CMat {
        match self.normalization {
            Normalization::Unnormalized => self.matrix.clone(),
            Normalization::TraceOne => &self.matrix * c(self.d_in as f64, 0.0),
        }
    }

    pub fn with_normalization(&self, normalization: Normalization) -> Self {
        let raw = self.unnormalized();
        let matrix = match normalization {
            Normalization::Unnormalized => raw,
            Normalization::TraceOne => raw / c(self.d_in as f64, 0.0),
        };
        ChannelChoi { matrix, d_in: self.d_in, d_out: self.d_out, normalization }
    }

    /// Row-major superoperator, vec(E(X)) = S vec(X).
    pub fn superop(&self) -> CMat {
        let u = self.unnormalized();
        let (di, dou) = (self.d_in, self.d_out);
        CMat::from_fn(dou * dou, di * di, |r, col| {
            let (a, b) = (r / dou, r % dou);
            let (i, j) = (col / di, col % di);
            u[(a * di + i, b * di + j)]
        })
    }

    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        if rho.nrows() != self.d_in || !rho.is_square() {
            return Err(Error::dim(format!(
                "channel input dimension {} but state is {}x{}",
                self.d_in,
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(contract_trailing(&self.unnormalized(), rho))
    }

    /// Heisenberg-picture action E†(X).
    pub fn apply_adjoint(&self, x: &CMat) -> Result<CMat> {
        if x.nrows() != self.d_out {
            return Err(Error::dim("adjoint input dimension mismatch"));
        }
        // E†(X)_{ji} = Σ_ab Ĉ[(a,i),(b,j)] X_{ba}
        let u = self.unnormalized();
        let di = self.d_in;
        let mut out = CMat::zeros(di, di);
        for i in 0..di {
            for j in 0..di {
                let mut acc = ZERO;
                for a in 0..self.d_out {
                    for b in 0..self.d_out {
                        acc += u[(a * di + i, b * di + j)] * x[(b, a)];
                    }
                }
                out[(j, i)] = acc;
            }
        }
        Ok(out)
    }

    /// `after ∘ self`.
    pub fn then(&self, after: &ChannelChoi) -> Result<ChannelChoi> {
        if after.d_in != self.d_out {
            return Err(Error::dim("composition dimension mismatch"));
        }
        let s = after.superop() * self.superop();
        ChannelChoi::from_superop(&s, self.d_in, after.d_out)
    }

    pub fn is_cp(&self, tol: f64) -> bool {
        eig_hermitized(&self.matrix).values[0] >= -tol * max_abs(&self.matrix).max(1.0)
    }

    /// Tr_out Ĉ = I_in.
    pub fn is_tp(&self, tol: f64) -> bool {
        let marg = trace_leading(&self.unnormalized(), self.d_out);
        frobenius(&(marg - identity(self.d_in))) <= tol
    }
}

/// Channel Choi built from the action on matrix units.
pub fn choi_from_map(
    d_in: usize,
    d_out: usize,
    action: impl Fn(&CMat) -> CMat,
    normalization: Normalization,
) -> ChannelChoi {
    let mut m = CMat::zeros(d_in * d_out, d_in * d_out);
    for i in 0..d_in {
        for j in 0..d_in {
            let out = action(&unit(d_in, i, j));
            m += kron(&out, &unit(d_in, i, j));
        }
    }
    ChannelChoi { matrix: m, d_in, d_out, normalization: Normalization::Unnormalized }
        .with_normalization(normalization)
}

pub fn apply_channel(ch: &ChannelChoi, rho: &CMat) -> Result<CMat> {
    ch.apply(rho)
}

/// Pauli transfer matrix R_ij = Tr[P_i E(P_j)]/d.
#[derive(Debug, Clone, PartialEq)]
pub struct Ptm(pub DMatrix<f64>);

impl Ptm {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Acts on unnormalized Pauli coefficient vectors c_P = Tr[ρ P].
    pub fn act(&self, coeffs: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(coeffs)).iter().copied().collect()
    }
}

pub fn choi_to_ptm(ch: &ChannelChoi) -> Result<Ptm> {
    let d = ch.d_in;
    if ch.d_out != d {
        return Err(Error::dim("PTM requires equal input and output dimension"));
    }
    let q = crate::algebra::qubit_count(d).ok_or_else(|| Error::dim("PTM requires qubits"))?;
    let paulis: Vec<CMat> = (0..d * d).map(|i| PauliString::from_index(i, q).matrix()).collect();
    let mut r = DMatrix::<f64>::zeros(d * d, d * d);
    for (j, pj) in paulis.iter().enumerate() {
        let out = ch.apply(pj)?;
        for (i, pi) in paulis.iter().enumerate() {
            r[(i, j)] = (pi * &out).trace().re / d as f64;
        }
    }
    Ok(Ptm(r))
}

pub fn ptm_to_choi(p: &Ptm) -> Result<ChannelChoi> {
    let n = p.0.nrows();
    let d = (n as f64).sqrt().round() as usize;
    let q = crate::algebra::qubit_count(d).filter(|_| d * d == n).ok_or_else(|| Error::dim("bad PTM size"))?;
    let paulis: Vec<CMat> = (0..n).map(|i| PauliString::from_index(i, q).matrix()).collect();
    let r = p.0.clone();
    Ok(choi_from_map(
        d,
        d,
        |x| {
            let mut out = CMat::zeros(d, d);
            for j in 0..n {
                let cj = (&paulis[j] * x).trace() / c(d as f64, 0.0);
                for i in 0..n {
                    if r[(i, j)] != 0.0 {
                        out += &paulis[i] * (cj * r[(i, j)]);
                    }
                }
            }
            out
        },
        Normalization::Unnormalized,
    ))
}

/// PTM of `a ∘ b`.
pub fn ptm_compose(a: &Ptm, b: &Ptm) -> Ptm {
    Ptm(&a.0 * &b.0)
}

/// Duals Δ_j of a list of equally sized matrices, Tr[B_i Δ_j] = δ_ij on
/// linearly independent sets; Moore–Penrose duals otherwise.
#[derive(Debug, Clone)]
pub struct DualFrame {
    pub duals: Vec<CMat>,
    pub rank: usize,
    pub dim: usize,
}

pub fn dual_frame(basis: &[CMat]) -> Result<DualFrame> {
    let first = basis.first().ok_or_else(|| Error::invalid("empty basis"))?;
    let (r, cc) = (first.nrows(), first.ncols());
    if basis.iter().any(|b| b.nrows() != r || b.ncols() != cc) {
        return Err(Error::dim("basis elements differ in shape"));
    }
    let n = basis.len();
    let mut frame = CMat::zeros(r * cc, n);
    for (k, b) in basis.iter().enumerate() {
        for (i, v) in vectorize(b).into_iter().enumerate() {
            frame[(i, k)] = v;
        }
    }
    let rcond = 1e-10 * (r * cc).max(n) as f64;
    let (pinv, rank) = pseudo_inverse(&frame, rcond)?;
    if rank == 0 {
        return Err(Error::RankDeficient("all-zero basis".into()));
    }
    let duals = (0..n)
        .map(|j| {
            let row: Vec<C64> = (0..r * cc).map(|i| pinv[(j, i)]).collect();
            devectorize(&row, r, cc).map(|m| m.transpose())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DualFrame { duals, rank, dim: r * cc })
}

impl DualFrame {
    pub fn len(&self) -> usize {
        self.duals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duals.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.rank == self.dim
    }

    /// α_j = Tr[x Δ_j].
    pub fn coefficients(&self, x: &CMat) -> Vec<C64> {
        self.duals.iter().map(|d| (x * d).trace()).collect()
    }
}

/// ρ = Σ p_i Δ_i over the POVM's dual frame.
pub fn qst_linear_inversion(probabilities: &[f64], povm: &Povm) -> Result<CMat> {
    if probabilities.len() != povm.len() {
        return Err(Error::dim("one probability per effect required"));
    }
    let frame = dual_frame(povm.effects())?;
    if !frame.is_complete() {
        return Err(Error::RankDeficient(format!(
            "POVM spans {} of {} dimensions",
            frame.rank, frame.dim
        )));
    }
    let d = povm.dim();
    let mut rho = CMat::zeros(d, d);
    for (p, dual) in probabilities.iter().zip(&frame.duals) {
        rho += dual * c(*p, 0.0);
    }
    Ok(rho)
}

/// Ê = Σ_i ρ'_i ⊗ ω_iᵀ, with ω the duals of the input states.
pub fn qpt_linear_inversion(outputs: &[CMat], input_duals: &DualFrame) -> Result<ChannelChoi> {
    if outputs.len() != input_duals.len() {
        return Err(Error::dim("one output per input state required"));
    }
    if !input_duals.is_complete() {
        return Err(Error::RankDeficient("input states are not informationally complete".into()));
    }
    let d_out = outputs[0].nrows();
    let d_in = input_duals.duals[0].nrows();
    let mut m = CMat::zeros(d_in * d_out, d_in * d_out);
    for (rho, w) in outputs.iter().zip(&input_duals.duals) {
        m += kron(rho, &w.transpose());
    }
    ChannelChoi::from_matrix(m, d_in, d_out, Normalization::Unnormalized)
}

/// N control operations per time step with their dual frame (over Choi matrices).
#[derive(Debug, Clone)]
pub struct InstrumentBasis {
    elements: Vec<CMat>,
    duals: DualFrame,
    d: usize,
}

impl InstrumentBasis {
    pub fn new(ops: &[ChannelChoi]) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::invalid("empty basis"))?;
        let d = first.d_in();
        if ops.iter().any(|o| o.d_in() != d || o.d_out() != d) {
            return Err(Error::dim("basis operations must act on one system"));
        }
        let elements: Vec<CMat> = ops.iter().map(|o| o.unnormalized()).collect();
        let duals = dual_frame(&elements)?;
        Ok(InstrumentBasis { elements, duals, d })
    }

    pub fn from_unitaries(us: &[CMat]) -> Result<Self> {
        let ops: Vec<ChannelChoi> = us.iter().map(ChannelChoi::from_unitary).collect();
        InstrumentBasis::new(&ops)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Unnormalized Choi of element `i`.
    pub fn choi(&self, i: usize) -> &CMat {
        &self.elements[i]
    }

    pub fn chois(&self) -> &[CMat] {
        &self.elements
    }

    pub fn op(&self, i: usize) -> ChannelChoi {
        ChannelChoi::from_matrix(self.elements[i].clone(), self.d, self.d, Normalization::Unnormalized)
            .expect("shape checked")
    }

    pub fn duals(&self) -> &DualFrame {
        &self.duals
    }

    /// Expansion coefficients α_ν = Tr[Â Δ_ν].
    pub fn expansion(&self, op: &ChannelChoi) -> Vec<C64> {
        self.duals.coefficients(&op.unnormalized())
    }

    pub fn rank(&self) -> usize {
        self.duals.rank
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{from_real_rows, Pauli};
    use crate::random::{haar_unitary, random_density, random_kraus, rng};

    fn random_channel(seed: u64) -> ChannelChoi {
        let mut r = rng(seed);
        ChannelChoi::from_kraus(&random_kraus(&mut r, 2, 3)).unwrap()
    }

    #[test]
    fn choi_examples() {
        let id = choi_from_map(2, 2, |x| x.clone(), Normalization::Unnormalized);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = ket_bra(&[c(s, 0.0), ZERO, ZERO, c(s, 0.0)]) * c(2.0, 0.0);
        assert!(frobenius(&(id.matrix() - &phi)) < 1e-14);

        let dep = choi_from_map(2, 2, |x| identity(2) * (x.trace() / c(2.0, 0.0)), Normalization::Unnormalized);
        assert!(frobenius(&(dep.matrix() - identity(4) / c(2.0, 0.0))) < 1e-14);

        let z = ChannelChoi::from_unitary(&Pauli::Z.matrix());
        let e = eig_hermitized(z.matrix()).values;
        assert!((e[3] - 2.0).abs() < 1e-12 && e[..3].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn apply_examples() {
        let mut r = rng(11);
        let rho = random_density(&mut r, 2, 2);
        let id = ChannelChoi::identity(2).with_normalization(Normalization::TraceOne);
        assert!(frobenius(&(id.apply(&rho).unwrap() - &rho)) < 1e-14);
        let dep = ChannelChoi::depolarizing(2, 1.0);
        assert!(frobenius(&(dep.apply(&rho).unwrap() - identity(2) / c(2.0, 0.0))) < 1e-14);
        let u = haar_unitary(&mut r, 2);
        let got = ChannelChoi::from_unitary(&u).apply(&rho).unwrap();
        assert!(frobenius(&(got - &u * &rho * u.adjoint())) < 1e-10);
        assert!(id.apply(&identity(3)).is_err());
    }

    #[test]
    fn superop_round_trip_and_composition() {
        let a = random_channel(12);
        let b = random_channel(13);
        let back = ChannelChoi::from_superop(&a.superop(), 2, 2).unwrap();
        assert!(frobenius(&(back.matrix() - a.matrix())) < 1e-13);
        let mut r = rng(14);
        let rho = random_density(&mut r, 2, 2);
        let ab = b.then(&a).unwrap();
        let direct = a.apply(&b.apply(&rho).unwrap()).unwrap();
        assert!(frobenius(&(ab.apply(&rho).unwrap() - direct)) < 1e-12);
        assert!(a.is_cp(1e-10) && a.is_tp(1e-10));
    }

    #[test]
    fn ptm_examples() {
        let zp = choi_to_ptm(&ChannelChoi::from_unitary(&Pauli::Z.matrix())).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]));
        assert!((zp.0.clone() - want).norm() < 1e-14);
        let xp = choi_to_ptm(&ChannelChoi::from_unitary(&Pauli::X.matrix())).unwrap();
        let xx = ptm_compose(&xp, &xp);
        assert!((xx.0 - DMatrix::<f64>::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn ptm_round_trip_and_action() {
        for seed in 0..10 {
            let ch = random_channel(100 + seed);
            let p = choi_to_ptm(&ch).unwrap();
            let back = ptm_to_choi(&p).unwrap();
            assert!(frobenius(&(back.matrix() - ch.matrix())) < 1e-10);
            assert!((p.0[(0, 0)] - 1.0).abs() < 1e-12 && (1..4).all(|j| p.0[(0, j)].abs() < 1e-12));
            let mut r = rng(seed);
            let rho = random_density(&mut r, 2, 2);
            let cin = crate::algebra::pauli_coefficients(&rho, 1);
            let cout = crate::algebra::pauli_coefficients(&ch.apply(&rho).unwrap(), 1);
            for (x, y) in p.act(&cin).iter().zip(cout) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orthonormal_frame_is_self_dual() {
        let basis: Vec<CMat> =
            (0..4).map(|i| PauliString::from_index(i, 1).matrix() / c(2f64.sqrt(), 0.0)).collect();
        let f = dual_frame(&basis).unwrap();
        for (b, d) in basis.iter().zip(&f.duals) {
            assert!(frobenius(&(b - d)) < 1e-12);
        }
        assert!(matches!(dual_frame(&[CMat::zeros(2, 2)]), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn overcomplete_frame_reconstructs_span() {
        let mut r = rng(15);
        let ops: Vec<CMat> = (0..20)
            .map(|_| ChannelChoi::from_unitary(&haar_unitary(&mut r, 2)).unwrap_matrix())
            .collect();
        let f = dual_frame(&ops).unwrap();
        assert_eq!(f.rank, 10);
        let target = ChannelChoi::from_unitary(&haar_unitary(&mut r, 2)).unwrap_matrix();
        let alpha = f.coefficients(&target);
        let mut rebuilt = CMat::zeros(4, 4);
        for (a, b) in alpha.iter().zip(&ops) {
            rebuilt += b * *a;
        }
        assert!(frobenius(&(rebuilt - target)) < 1e-9);
    }

    #[test]
    fn qst_examples() {
        let povm = Povm::pauli6();
        let zero = unit(2, 0, 0);
        let rho = qst_linear_inversion(&povm.probabilities(&zero), &povm).unwrap();
        assert!(frobenius(&(rho - &zero)) < 1e-12);
        let mut r = rng(16);
        let sigma = random_density(&mut r, 2, 2);
        let p = povm.probabilities(&sigma);
        let est = qst_linear_inversion(&p, &povm).unwrap();
        for (a, b) in povm.probabilities(&est).iter().zip(&p) {
            assert!((a - b).abs() < 1e-10);
        }
        let z_only = Povm::computational(2);
        assert!(matches!(qst_linear_inversion(&[1.0, 0.0], &z_only), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn qpt_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let inputs = vec![
            unit(2, 0, 0),
            unit(2, 1, 1),
            ket_bra(&[c(s, 0.0), c(s, 0.0)]),
            ket_bra(&[c(s, 0.0), c(0.0, s)]),
        ];
        let frame = dual_frame(&inputs).unwrap();
        let id = qpt_linear_inversion(&inputs, &frame).unwrap();
        assert!(frobenius(&(id.matrix() - ChannelChoi::identity(2).matrix())) < 1e-10);
        let ch = random_channel(17);
        let outs: Vec<CMat> = inputs.iter().map(|x| ch.apply(x).unwrap()).collect();
        let est = qpt_linear_inversion(&outs, &frame).unwrap();
        assert!(frobenius(&(est.matrix() - ch.matrix())) < 1e-9);
    }

    #[test]
    fn povm_validation() {
        assert!(Povm::new(vec![unit(2, 0, 0)]).is_err());
        let bad = from_real_rows(&[&[1.0, 0.0], &[0.0, -0.5]]);
        assert!(Povm::new(vec![bad, from_real_rows(&[&[0.0, 0.0], &[0.0, 1.5]])]).is_err());
        assert_eq!(Povm::pauli6().settings().len(), 3);
    }

    trait UnwrapMatrix {
        fn unwrap_matrix(self) -> CMat;
    }
    impl UnwrapMatrix for ChannelChoi {
        fn unwrap_matrix(self) -> CMat {
            self.unnormalized()
        }
    }
}
