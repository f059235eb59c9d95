//! Seeded random objects.
//!
//! All generators are ChaCha8 (`rand_chacha` 0.9) keyed with
//! `seed_from_u64(seed)`. Independent substreams for parallel work use the
//! same key and `set_stream(index)`, so serial and parallel runs draw
//! identical numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{c, CMat, C64};

pub type SimRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

pub fn normal<R: Rng + ?Sized>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

pub fn complex_normal<R: Rng + ?Sized>(r: &mut R) -> C64 {
    c(normal(r), normal(r))
}

/// Independent standard-normal real and imaginary parts.
pub fn random_matrix<R: Rng + ?Sized>(r: &mut R, rows: usize, cols: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_normal(r);
        }
    }
    m
}

/// (M + M†)/2 for a Gaussian M.
pub fn random_hermitian<R: Rng + ?Sized>(r: &mut R, n: usize) -> CMat {
    let m = random_matrix(r, n, n);
    (&m + m.adjoint()) * c(0.5, 0.0)
}

/// Haar-random unitary via QR of a Ginibre matrix with phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(r: &mut R, n: usize) -> CMat {
    let g = random_matrix(r, n, n);
    let qr = g.qr();
    let (mut q, rr) = (qr.q(), qr.r());
    for j in 0..n {
        let d = rr[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Haar-random pure state vector.
pub fn haar_state<R: Rng + ?Sized>(r: &mut R, n: usize) -> Vec<C64> {
    let mut v: Vec<C64> = (0..n).map(|_| complex_normal(r)).collect();
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Random mixed state G G† / Tr with Ginibre G of the given rank.
pub fn random_density<R: Rng + ?Sized>(r: &mut R, n: usize, rank: usize) -> CMat {
    let g = random_matrix(r, n, rank.max(1));
    let m = &g * g.adjoint();
    let t = m.trace();
    m / t
}

/// Kraus operators of a random CPTP map from a Haar isometry with `rank` outputs.
pub fn random_kraus<R: Rng + ?Sized>(r: &mut R, d: usize, rank: usize) -> Vec<CMat> {
    let u = haar_unitary(r, d * rank);
    (0..rank)
        .map(|k| CMat::from_fn(d, d, |i, j| u[(k * d + i, j)]))
        .collect()
}

pub fn uniform<R: Rng + ?Sized>(r: &mut R, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}
