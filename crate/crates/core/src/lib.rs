//! Numerical toolkit for one-dimensional magnetic Schrödinger operators whose
//! coefficients have bounded variation and whose short-range potential may
//! contain point interactions.

pub mod bv;
pub mod carleman;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod operator;
pub mod poly;
pub mod propagator;
pub mod quad;
pub mod resolvent;
pub mod resonance;
pub mod transfer;
pub mod weights;

pub use bv::{product_rule_check, Closure, PiecewiseBV, ProductRuleReport, Side, SignedMeasure};
pub use error::{Error, Result};
pub use mesh::{GridFunction, Mesh};
pub use operator::{
    apply_operator, form_lower_bound, jump_rule, quadratic_form, rescale, CoefficientSpec, FormBound, SpectralPoint,
};
pub use poly::{Poly, Rational};
pub use carleman::{
    build_weight, check_atom_inequalities, choose_phase_slope, compute_tau, constant_report, estimate_mesh,
    evaluate_estimate, AtomInequality, CarlemanWeight, ConstantReport, EstimateSides, PhaseSpec,
};
pub use linalg::{fit_line, LineFit, NormEstimate};
pub use propagator::{decay_fit, evolve, schrodinger_evolve, wave_evolve, DecayFit, EvolutionReport, Propagator};
pub use resolvent::{lap_sweep, opnorm_estimate, solve, NormReport, SolutionField, SweepConfig, WeightPair};
pub use resonance::{
    find_resonances, strip_certificate, zero_resonance_test, CutoffSpec, MatchingDeterminant, Rect, Resonance,
    ResonanceReport, ZeroResonanceReport,
};
pub use transfer::ExteriorRule;
pub use weights::{Cutoff, Weight};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
