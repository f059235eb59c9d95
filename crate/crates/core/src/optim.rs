//! Small unconstrained optimizers: limited-memory BFGS with Armijo
//! backtracking and a Nelder–Mead simplex search.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when ‖∇f‖ ≤ gradient_tolerance.
    pub gradient_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Step scale used before any curvature pair is available.
    pub initial_scale: Option<f64>,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-8,
            armijo: 1e-4,
            max_backtracks: 60,
            initial_scale: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn s_step(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Minimizes `f`, which returns (value, gradient).
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalls = 0;

    for iter in 0..cfg.max_iterations {
        let gn = norm(&g);
        if gn <= cfg.gradient_tolerance {
            return LbfgsResult { x, value: fx, gradient_norm: gn, iterations: iter, evaluations, status: LbfgsStatus::Converged };
        }

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => cfg.initial_scale.unwrap_or(1.0 / gn.max(1e-300)),
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            pairs.clear();
            let scale = cfg.initial_scale.unwrap_or(1.0 / gn);
            d = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &d);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (fn_, gn_) = f(&xn);
            evaluations += 1;
            // Below rounding level in f, accept on gradient decrease instead.
            let flat = fn_ <= fx + 1e-13 * fx.abs().max(1.0) && norm(&gn_) < gn;
            if fn_.is_finite() && (fn_ <= fx + cfg.armijo * t * slope || flat) {
                accepted = Some((xn, fn_, gn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gnew)) = accepted else {
            return LbfgsResult { x, value: fx, gradient_norm: gn, iterations: iter, evaluations, status: LbfgsStatus::LineSearchFailed };
        };

        let s = s_step(&xn, &x);
        let step = norm(&s);
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) && sy > 0.0 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        if step <= 1e-15 * norm(&x).max(1.0) {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x = xn;
        fx = fn_;
        g = gnew;
        if stalls >= 5 {
            let gn = norm(&g);
            let status = if gn <= cfg.gradient_tolerance { LbfgsStatus::Converged } else { LbfgsStatus::Stagnated };
            return LbfgsResult { x, value: fx, gradient_norm: gn, iterations: iter + 1, evaluations, status };
        }
    }
    let gn = norm(&g);
    let status = if gn <= cfg.gradient_tolerance { LbfgsStatus::Converged } else { LbfgsStatus::MaxIterations };
    LbfgsResult { x, value: fx, gradient_norm: gn, iterations: cfg.max_iterations, evaluations, status }
}

/// Central finite-difference gradient.
pub fn numeric_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NelderMeadConfig {
    pub max_evaluations: usize,
    pub initial_step: f64,
    /// Stop when the simplex value spread drops below this.
    pub tolerance: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig { max_evaluations: 2000, initial_step: 0.3, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `f` with the standard reflection/expansion/contraction/shrink moves.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], cfg: &NelderMeadConfig) -> NelderMeadResult {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = f(x0);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += cfg.initial_step;
        let v = f(&p);
        simplex.push((p, v));
    }
    let mut evals = n + 1;
    let mut best = (x0.to_vec(), f0);

    while evals < cfg.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best.1 {
            best = simplex[0].clone();
        }
        if (simplex[n].1 - simplex[0].1).abs() <= cfg.tolerance {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (w - c)).collect()
        };
        let worst = simplex[n].0.clone();
        let xr = along(-1.0, &worst);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0, &worst);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5, &worst);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5, &worst);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = x_best.iter().zip(&item.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = f(&p);
                    *item = (p, v);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if simplex[0].1 < best.1 {
        best = simplex[0].clone();
    }
    NelderMeadResult { x: best.0, value: best.1, evaluations: evals }
}
