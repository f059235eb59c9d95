//! Projection onto PSD matrices satisfying causality: alternating
//! projections versus the dual quasi-Newton method.

use ptt::projection::{benchmark_projections, Regime};

fn main() {
    let run = benchmark_projections(10, &Regime::standard(), 1, 1e-8);
    print!("{}", run.to_csv());
    for (regime, gap) in &run.max_disagreement {
        println!("{regime}: max Frobenius disagreement {gap:.2e}");
    }
}
