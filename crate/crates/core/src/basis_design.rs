//! Single-qubit unitary control bases: the three-angle parametrization,
//! normalized Hilbert–Schmidt overlaps and a multi-start search for ten
//! minimally overlapping unitaries.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{c, kron, pseudo_inverse, vectorize, CMat};
use crate::channels::InstrumentBasis;
use crate::error::Result;
use crate::optim::{lbfgs, numeric_gradient, LbfgsConfig};
use crate::random::{substream, uniform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitaryParams {
    pub theta: f64,
    pub phi: f64,
    pub lambda: f64,
}

impl UnitaryParams {
    pub fn new(theta: f64, phi: f64, lambda: f64) -> Self {
        UnitaryParams { theta, phi, lambda }
    }

    pub fn matrix(&self) -> CMat {
        unitary_from_params(self)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.theta, self.phi, self.lambda]
    }
}

/// [[cos θ/2, −e^{iλ} sin θ/2], [e^{iφ} sin θ/2, e^{i(λ+φ)} cos θ/2]].
pub fn unitary_from_params(p: &UnitaryParams) -> CMat {
    let (s, co) = (p.theta / 2.0).sin_cos();
    let e = |a: f64| c(a.cos(), a.sin());
    CMat::from_row_slice(
        2,
        2,
        &[c(co, 0.0), -e(p.lambda) * s, e(p.phi) * s, e(p.lambda + p.phi) * co],
    )
}

/// |Tr[u†v]|² / d², so every unitary has self-overlap 1.
pub fn hs_overlap(u: &CMat, v: &CMat) -> f64 {
    let d = u.nrows() as f64;
    (u.adjoint() * v).trace().norm_sqr() / (d * d)
}

/// Row-major superoperator u ⊗ u*.
pub fn superoperator(u: &CMat) -> CMat {
    kron(u, &u.map(|z| z.conj()))
}

/// Closed-form overlap expression as printed in the literature,
/// 4cos²(½(λ₁−λ₂+φ₁−φ₂))cos²(θ₁−θ₂) divided by d² = 4. It does not agree
/// with the direct overlap; kept for comparison only.
pub fn printed_closed_form_overlap(a: &UnitaryParams, b: &UnitaryParams) -> f64 {
    let x = 0.5 * (a.lambda - b.lambda + a.phi - b.phi);
    x.cos().powi(2) * (a.theta - b.theta).cos().powi(2)
}

/// Direct closed form: Tr[u†v] = (1 + e^{iΔ(λ+φ)}) cc + (e^{iΔφ} + e^{iΔλ}) ss.
pub fn closed_form_overlap(a: &UnitaryParams, b: &UnitaryParams) -> f64 {
    let cc = (a.theta / 2.0).cos() * (b.theta / 2.0).cos();
    let ss = (a.theta / 2.0).sin() * (b.theta / 2.0).sin();
    let e = |x: f64| c(x.cos(), x.sin());
    let t = (c(1.0, 0.0) + e(b.lambda + b.phi - a.lambda - a.phi)) * cc + (e(b.phi - a.phi) + e(b.lambda - a.lambda)) * ss;
    t.norm_sqr() / 4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitaryBasis {
    pub elements: Vec<UnitaryParams>,
    /// Normalized pairwise overlaps.
    #[serde(skip)]
    pub overlap_matrix: DMatrix<f64>,
}

impl UnitaryBasis {
    pub fn new(elements: Vec<UnitaryParams>) -> Self {
        let us: Vec<CMat> = elements.iter().map(|p| p.matrix()).collect();
        let n = us.len();
        let overlap_matrix = DMatrix::from_fn(n, n, |i, j| hs_overlap(&us[i], &us[j]));
        UnitaryBasis { elements, overlap_matrix }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn unitaries(&self) -> Vec<CMat> {
        self.elements.iter().map(|p| p.matrix()).collect()
    }

    pub fn instrument_basis(&self) -> Result<InstrumentBasis> {
        InstrumentBasis::from_unitaries(&self.unitaries())
    }

    /// Σ_{i<j} overlap².
    pub fn objective(&self) -> f64 {
        let n = self.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += self.overlap_matrix[(i, j)].powi(2);
            }
        }
        s
    }

    /// Mean of each row of the overlap matrix, self-overlap included.
    pub fn average_overlaps(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.overlap_matrix.row_iter().map(|r| r.sum() / n).collect()
    }

    /// Mean of each row excluding the diagonal.
    pub fn off_diagonal_averages(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.overlap_matrix.row_iter().map(|r| (r.sum() - 1.0) / (n - 1.0)).collect()
    }

    /// Rank of the stacked row-vectorized superoperators.
    pub fn superoperator_rank(&self) -> usize {
        superoperator_rank(&self.unitaries())
    }
}

pub fn superoperator_rank(us: &[CMat]) -> usize {
    let rows: Vec<Vec<_>> = us.iter().map(|u| vectorize(&superoperator(u))).collect();
    let m = CMat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    pseudo_inverse(&m, 1e-10).map(|(_, rank)| rank).unwrap_or(0)
}

/// Σ_{i<j} overlap(U_i, U_j)² over explicit matrices.
pub fn muub_objective(us: &[CMat]) -> f64 {
    let mut s = 0.0;
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            s += hs_overlap(&us[i], &us[j]).powi(2);
        }
    }
    s
}

fn objective_flat(x: &[f64]) -> f64 {
    let us: Vec<CMat> = x.chunks(3).map(|p| unitary_from_params(&UnitaryParams::new(p[0], p[1], p[2]))).collect();
    muub_objective(&us)
}

#[derive(Debug, Clone)]
pub struct MuubSearch {
    pub basis: UnitaryBasis,
    pub objective: f64,
    pub restart_objectives: Vec<f64>,
}

/// Multi-start L-BFGS over the 3N angles; restart `r` draws its start from
/// substream `(seed, r)`.
pub fn muub_search(n: usize, seed: u64, restarts: usize) -> MuubSearch {
    let cfg = LbfgsConfig { max_iterations: 500, gradient_tolerance: 1e-10, ..Default::default() };
    let runs: Vec<(Vec<f64>, f64)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let x0: Vec<f64> = (0..3 * n).map(|_| uniform(&mut rng, -PI, PI)).collect();
            let res = lbfgs(
                |x| {
                    let f = objective_flat(x);
                    let mut fo = objective_flat;
                    let g = numeric_gradient(&mut fo, x, 1e-6);
                    (f, g)
                },
                x0,
                &cfg,
            );
            (res.x, res.value)
        })
        .collect();
    let restart_objectives: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let best = runs.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("one restart");
    let elements = best.0.chunks(3).map(|p| UnitaryParams::new(p[0], p[1], p[2])).collect();
    let basis = UnitaryBasis::new(elements);
    MuubSearch { objective: basis.objective(), basis, restart_objectives }
}

/// Random parameter sets drawn like the search starting points.
pub fn random_basis(n: usize, seed: u64, index: u64) -> UnitaryBasis {
    let mut rng = substream(seed, index);
    UnitaryBasis::new(
        (0..n)
            .map(|_| UnitaryParams::new(uniform(&mut rng, -PI, PI), uniform(&mut rng, -PI, PI), uniform(&mut rng, -PI, PI)))
            .collect(),
    )
}

pub const REFERENCE_MUUB: [[f64; 3]; 10] = [
    [1.1148, 1.5606, 0.8160],
    [-2.1993, -2.0552, -0.3564],
    [0.9616, -0.8573, 1.2333],
    [2.2655, -2.7083, 0.3154],
    [-0.1013, -0.5548, -1.1472],
    [1.8434, 0.8074, -1.1772],
    [-2.2036, 1.9589, 2.4002],
    [-1.2038, -0.2023, 1.2355],
    [2.1791, 3.2836, 2.3524],
    [-1.3116, 2.3082, 0.2882],
];

/// The tabulated ten-element approximate MUUB.
pub fn reference_muub() -> UnitaryBasis {
    UnitaryBasis::new(REFERENCE_MUUB.iter().map(|p| UnitaryParams::new(p[0], p[1], p[2])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{frobenius, identity, Pauli};
    use crate::channels::ChannelChoi;
    use crate::random::{haar_unitary, rng};

    #[test]
    fn parametrization() {
        let id = unitary_from_params(&UnitaryParams::new(0.0, 0.0, 0.0));
        assert!(frobenius(&(id - identity(2))) < 1e-15);
        let x = unitary_from_params(&UnitaryParams::new(PI, 0.0, PI));
        let a = ChannelChoi::from_unitary(&x);
        let b = ChannelChoi::from_unitary(&Pauli::X.matrix());
        assert!(frobenius(&(a.matrix() - b.matrix())) < 1e-12);
        let mut r = rng(1);
        for _ in 0..20 {
            let p = UnitaryParams::new(uniform(&mut r, -PI, PI), uniform(&mut r, -PI, PI), uniform(&mut r, -PI, PI));
            let u = p.matrix();
            assert!(frobenius(&(u.adjoint() * &u - identity(2))) < 1e-12);
        }
    }

    #[test]
    fn overlap_basics() {
        let mut r = rng(2);
        let u = haar_unitary(&mut r, 2);
        assert!((hs_overlap(&u, &u) - 1.0).abs() < 1e-12);
        assert!(hs_overlap(&identity(2), &Pauli::X.matrix()).abs() < 1e-15);
        let v = haar_unitary(&mut r, 2);
        let phase = c(0.3f64.cos(), 0.3f64.sin());
        assert!((hs_overlap(&u, &v) - hs_overlap(&v, &u)).abs() < 1e-14);
        assert!((hs_overlap(&(&u * phase), &v) - hs_overlap(&u, &v)).abs() < 1e-14);
        let su = superoperator(&u);
        let sv = superoperator(&v);
        let hs = (su.adjoint() * sv).trace().re / 4.0;
        assert!((hs - hs_overlap(&u, &v)).abs() < 1e-10);
    }

    #[test]
    fn reference_table_values() {
        let b = reference_muub();
        let m = &b.overlap_matrix;
        let table = [
            (1, 0, 0.19688),
            (2, 0, 0.19688),
            (2, 1, 0.11111),
            (3, 0, 0.16758),
            (6, 0, 0.03286),
            (7, 4, 0.03286),
            (9, 3, 0.03286),
            (9, 8, 0.19688),
            (8, 5, 0.11111),
        ];
        for (i, j, v) in table {
            assert!((m[(i, j)] - v).abs() < 5e-5, "({i},{j}) = {}", m[(i, j)]);
        }
        for i in 0..10 {
            assert!((m[(i, i)] - 1.0).abs() < 1e-12);
        }
        let avg = b.average_overlaps();
        assert!((avg[0] - 0.24907).abs() < 5e-5 && (avg[1] - 0.25146).abs() < 5e-5);
        assert_eq!(b.superoperator_rank(), 10);
        assert_eq!(b.elements[0].to_array(), [1.1148, 1.5606, 0.8160]);
        assert_eq!(b.elements[9].to_array(), [-1.3116, 2.3082, 0.2882]);
    }

    #[test]
    fn closed_forms() {
        let b = reference_muub();
        let mut worst_printed = 0.0f64;
        for i in 0..10 {
            for j in 0..10 {
                let direct = b.overlap_matrix[(i, j)];
                assert!((closed_form_overlap(&b.elements[i], &b.elements[j]) - direct).abs() < 1e-12);
                worst_printed = worst_printed.max((printed_closed_form_overlap(&b.elements[i], &b.elements[j]) - direct).abs());
            }
        }
        assert!(worst_printed > 1e-2, "printed form unexpectedly agrees");
    }

    #[test]
    fn search_two_elements_reaches_zero() {
        let s = muub_search(2, 3, 4);
        assert!(s.objective < 1e-10);
    }
}
