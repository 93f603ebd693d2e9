//! Spatial weights, cutoff bumps and tail integrals.

use crate::bv::PiecewiseBV;
use crate::poly::Poly;
use crate::quad::GaussRule;
use serde::{Deserialize, Serialize};

/// Japanese bracket `⟨x⟩ = (1 + x²)^{1/2}`.
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// `χ = 1` on `[-inner, inner]`, `χ = 0` outside `(-outer, outer)`, quintic
/// smoothstep between (C² at the joints).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
    pub profile: PiecewiseBV,
}

pub(crate) fn smoothstep(a: f64, b: f64, rising: bool) -> Poly {
    // 10t^3 - 15t^4 + 6t^5 with t = (x-a)/(b-a), expanded in x
    let d = b - a;
    let t = Poly::new(vec![-a / d, 1.0 / d]);
    let t2 = t.mul(&t);
    let t3 = t2.mul(&t);
    let s = t3.scale(10.0).sub(&t3.mul(&t).scale(15.0)).add(&t3.mul(&t2).scale(6.0));
    if rising {
        s
    } else {
        Poly::constant(1.0).sub(&s)
    }
}

impl Cutoff {
    pub fn new(inner: f64, outer: f64) -> Self {
        assert!(0.0 <= inner && inner < outer, "cutoff radii must satisfy 0 <= inner < outer");
        let profile = PiecewiseBV {
            breaks: vec![-outer, -inner, inner, outer],
            pieces: vec![
                Poly::zero(),
                smoothstep(-outer, -inner, true),
                Poly::constant(1.0),
                smoothstep(inner, outer, false),
                Poly::zero(),
            ],
        };
        Cutoff { inner, outer, profile }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.profile.eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let k = self.profile.piece_index(x);
        self.profile.pieces[k].deriv().eval(x)
    }
}

/// Multiplier applied on the input or output side of the resolvent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    Zero,
    One,
    /// `⟨x⟩^{-s}`
    Japanese { s: f64 },
    /// `1_{|x|>r}⟨x⟩^{-s}`
    Exterior { s: f64, r: f64 },
    Bump(Cutoff),
}

impl Weight {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Weight::Zero => 0.0,
            Weight::One => 1.0,
            Weight::Japanese { s } => japanese(x).powf(-s),
            Weight::Exterior { s, r } => {
                if x.abs() > *r {
                    japanese(x).powf(-s)
                } else {
                    0.0
                }
            }
            Weight::Bump(c) => c.eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Weight::Zero | Weight::One => 0.0,
            Weight::Japanese { s } => -s * x * japanese(x).powf(-s - 2.0),
            Weight::Exterior { s, r } => {
                if x.abs() > *r {
                    -s * x * japanese(x).powf(-s - 2.0)
                } else {
                    0.0
                }
            }
            Weight::Bump(c) => c.deriv(x),
        }
    }

    /// Points where the weight is not smooth.
    pub fn knots(&self) -> Vec<f64> {
        match self {
            Weight::Exterior { r, .. } if *r > 0.0 => vec![-r, *r],
            Weight::Bump(c) => c.profile.breaks.clone(),
            _ => vec![],
        }
    }

    /// Bounded support, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Weight::Zero => Some((0.0, 0.0)),
            Weight::Bump(c) => Some((-c.outer, c.outer)),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Weight::Zero)
    }
}

/// `∫_0^∞ f(t) e^{k t} dt` for `k ≤ 0`, via `t = tan θ` with panels graded
/// geometrically towards `θ = π/2`.
pub fn tail_integral<F: Fn(f64) -> f64>(k: f64, f: F) -> f64 {
    let rule = GaussRule::get(16);
    let half = std::f64::consts::FRAC_PI_2;
    let g = |th: f64| {
        let t = th.tan();
        let c = th.cos();
        let e = if k == 0.0 { 1.0 } else { (k * t).exp() };
        if e == 0.0 {
            0.0
        } else {
            f(t) * e / (c * c)
        }
    };
    let mut s = 0.0;
    let mut a = 0.0;
    let mut width = half / 2.0;
    for _ in 0..110 {
        let b = a + width;
        s += rule.integrate(a, b, &g);
        a = b;
        width = (half - a) / 2.0;
    }
    s
}
