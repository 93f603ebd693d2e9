//! Fixtures shared by the benchmarks.

use bvlap_core::resonance::barrier_example;
use bvlap_core::{CoefficientSpec, PiecewiseBV, Poly, SignedMeasure};

/// Magnetic barrier with a point interaction and a side well.
pub fn mixed_spec(h: f64) -> CoefficientSpec {
    let base = barrier_example(10.0);
    CoefficientSpec {
        v0: SignedMeasure::dirac(0.3, 1.5),
        v1: base.v1.add(&PiecewiseBV::indicator(1.5, 2.5, -0.5)),
        ..base
    }
    .with_h(h)
}

/// Piecewise cubic with `n` pieces on `[-5, 5]` and constant tails.
pub fn wiggly(n: usize, shift: f64) -> PiecewiseBV {
    let breaks: Vec<f64> = (0..=n).map(|k| -5.0 + 10.0 * k as f64 / n as f64).collect();
    let mut pieces = vec![Poly::constant(shift)];
    for k in 0..n {
        let c = (k as f64 + shift).sin();
        pieces.push(Poly::new(vec![c, 0.5 * c, -0.25, 0.1 * shift]));
    }
    pieces.push(Poly::constant(-shift));
    PiecewiseBV::new(breaks, pieces).unwrap()
}
