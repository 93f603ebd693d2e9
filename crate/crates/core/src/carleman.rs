//! Carleman phase, threshold, remainder measure, regularized weight and the
//! assembled constant of the weighted estimate.

use crate::bv::{PiecewiseBV, SignedMeasure};
use crate::error::{Error, Result};
use crate::mesh::{GridFunction, Mesh};
use crate::operator::{apply_operator, CoefficientSpec, SpectralPoint};
use crate::poly::{Poly, Rational};
use crate::quad::GaussRule;
use crate::resolvent::{resolvent_mesh, solve, SolutionField};
use crate::weights::{japanese, smoothstep, tail_integral};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Points per decade of the slope search grid.
pub const SLOPE_GRID_PER_DECADE: i32 = 64;

/// Even phase with slope `k` on `(0, R₁]`, a quintic taper to zero on
/// `(R₁, 2R₁]` and zero slope beyond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub r1: f64,
    pub k: f64,
    /// Odd derivative of the phase.
    pub slope: PiecewiseBV,
    pub phase: PiecewiseBV,
}

fn reflect(p: &Poly) -> Poly {
    Poly::new(
        p.c.iter()
            .enumerate()
            .map(|(i, c)| if i % 2 == 1 { -c } else { *c })
            .collect(),
    )
}

impl PhaseSpec {
    pub fn new(r1: f64, k: f64) -> Result<Self> {
        if !(r1.is_finite() && k.is_finite() && r1 >= 0.0 && k >= 0.0) {
            return Err(Error::Invalid(format!("phase needs R1, k >= 0 (got {r1}, {k})")));
        }
        if r1 == 0.0 || k == 0.0 {
            return Ok(PhaseSpec {
                r1,
                k,
                slope: PiecewiseBV::zero(),
                phase: PiecewiseBV::zero(),
            });
        }
        let down = smoothstep(r1, 2.0 * r1, false).scale(k);
        let slope = PiecewiseBV::new(
            vec![-2.0 * r1, -r1, 0.0, r1, 2.0 * r1],
            vec![
                Poly::zero(),
                reflect(&down).scale(-1.0),
                Poly::constant(-k),
                Poly::constant(k),
                down,
                Poly::zero(),
            ],
        )?;
        let phase = SignedMeasure::absolutely_continuous(slope.clone()).cumulative(0.0);
        Ok(PhaseSpec { r1, k, slope, phase })
    }

    pub fn zero() -> Self {
        PhaseSpec {
            r1: 0.0,
            k: 0.0,
            slope: PiecewiseBV::zero(),
            phase: PiecewiseBV::zero(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.phase.eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.slope.eval(x)
    }

    pub fn sup(&self) -> f64 {
        self.phase.sup().max(0.0)
    }

    pub fn knots(&self) -> Vec<f64> {
        self.slope.breaks.clone()
    }

    /// Same taper with another slope.
    pub fn with_slope(&self, k: f64) -> Result<Self> {
        PhaseSpec::new(self.r1, k)
    }
}

/// Piecewise rational function on the partition cut at `breaks`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseRational {
    pub breaks: Vec<f64>,
    pub pieces: Vec<Rational>,
}

impl PiecewiseRational {
    pub fn piece_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.breaks[k - 1] };
        let hi = if k == self.breaks.len() { f64::INFINITY } else { self.breaks[k] };
        (lo, hi)
    }

    /// Value from the piece on the right of `x` when `x` is a breakpoint.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b <= x);
        self.pieces[k].eval(x)
    }

    /// Essential infimum over the part of the line where `keep(lo, hi)` yields an
    /// interval of positive length.
    fn inf_where<F: Fn(f64, f64) -> Option<(f64, f64)>>(&self, keep: F) -> f64 {
        let mut lo = f64::INFINITY;
        for (k, p) in self.pieces.iter().enumerate() {
            let (a, b) = self.piece_bounds(k);
            if let Some((a, b)) = keep(a, b) {
                if a < b {
                    lo = lo.min(p.range_on(a, b).0);
                }
            }
        }
        lo
    }

    pub fn inf(&self) -> f64 {
        self.inf_where(|a, b| Some((a, b)))
    }
}

fn common_breaks(fs: &[&PiecewiseBV]) -> Vec<f64> {
    let mut b: Vec<f64> = fs.iter().flat_map(|f| f.breaks.iter().copied()).collect();
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup();
    b
}

fn probe(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        _ => 0.0,
    }
}

fn piece_at(f: &PiecewiseBV, x: f64) -> Poly {
    f.pieces[f.piece_index(x)].clone()
}

fn bounds(breaks: &[f64], k: usize) -> (f64, f64) {
    let lo = if k == 0 { f64::NEG_INFINITY } else { breaks[k - 1] };
    let hi = if k == breaks.len() { f64::INFINITY } else { breaks[k] };
    (lo, hi)
}

/// `β⁻¹α(E - V₁) + α²(φ')² + b₁²` as a piecewise rational function.
pub fn threshold(spec: &CoefficientSpec, phase: &PhaseSpec, e: f64) -> PiecewiseRational {
    let breaks = common_breaks(&[&spec.alpha, &spec.beta, &spec.v1, &spec.b1, &phase.slope]);
    let pieces = (0..=breaks.len())
        .map(|k| {
            let (lo, hi) = bounds(&breaks, k);
            let x = probe(lo, hi);
            let a = piece_at(&spec.alpha, x);
            let bt = piece_at(&spec.beta, x);
            let v = piece_at(&spec.v1, x);
            let b1 = piece_at(&spec.b1, x);
            let ph = piece_at(&phase.slope, x);
            let ap = a.mul(&ph);
            let main = Rational {
                num: a.mul(&v.scale(-1.0).add_const(e)),
                den: bt,
            };
            main.add(&Rational::poly(ap.mul(&ap).add(&b1.mul(&b1))))
        })
        .collect();
    PiecewiseRational { breaks, pieces }
}

/// `τ = inf_x (β⁻¹α(E - V₁) + α²(φ')² + b₁²)`, exact per piece.
pub fn compute_tau(spec: &CoefficientSpec, phase: &PhaseSpec, e: f64) -> f64 {
    threshold(spec, phase, e).inf()
}

/// `inf_{|x| ≥ R₁} (β⁻¹α(E - V₁) + b₁²)`.
pub fn exterior_infimum(spec: &CoefficientSpec, e: f64, r1: f64) -> f64 {
    let t = threshold(spec, &PhaseSpec::zero(), e);
    let right = t.inf_where(|a, b| Some((a.max(r1), b)));
    let left = t.inf_where(|a, b| Some((a, b.min(-r1))));
    right.min(left)
}

/// Smallest slope on the geometric grid `10^{j/64}` with `τ ≥ tau_target`; the
/// target defaults to half the exterior infimum.
pub fn choose_phase_slope(spec: &CoefficientSpec, e: f64, r1: f64, tau_target: Option<f64>) -> Result<PhaseSpec> {
    let ext = exterior_infimum(spec, e, r1);
    if !(ext > 0.0) {
        return Err(Error::Hypothesis(format!(
            "infimum of β⁻¹α(E - V₁) + b₁² over |x| >= {r1} is {ext}"
        )));
    }
    let target = tau_target.unwrap_or(0.5 * ext);
    let zero = PhaseSpec::new(r1, 0.0)?;
    if compute_tau(spec, &zero, e) >= target {
        return Ok(zero);
    }
    let ok = |j: i32| -> Result<bool> {
        let k = 10f64.powf(j as f64 / SLOPE_GRID_PER_DECADE as f64);
        Ok(compute_tau(spec, &PhaseSpec::new(r1, k)?, e) >= target)
    };
    let (mut lo, mut hi) = (-3 * SLOPE_GRID_PER_DECADE, 6 * SLOPE_GRID_PER_DECADE);
    if r1 == 0.0 || !ok(hi)? {
        return Err(Error::NoConvergence(format!(
            "no phase slope up to 1e6 reaches tau = {target} with R1 = {r1}"
        )));
    }
    if ok(lo)? {
        hi = lo;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    PhaseSpec::new(r1, 10f64.powf(hi as f64 / SLOPE_GRID_PER_DECADE as f64))
}

fn integrate_rational(r: &Rational, a: f64, b: f64) -> f64 {
    let rule = GaussRule::get(24);
    let n = 4;
    let len = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let lo = a + i as f64 * len;
            rule.integrate(lo, lo + len, |x| r.eval(x))
        })
        .sum()
}

/// Nonnegative finite measure: piecewise rational density plus atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct RemainderMeasure {
    pub density: PiecewiseRational,
    /// Sorted `(x, mass)` with positive masses.
    pub atoms: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl RemainderMeasure {
    pub fn new(density: PiecewiseRational, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let n = density.pieces.len();
        for k in [0, n - 1] {
            if !density.pieces[k].num.is_zero() {
                return Err(Error::Invalid("remainder measure has infinite mass".into()));
            }
        }
        if atoms.iter().any(|a| !(a.1 >= 0.0) || !a.0.is_finite()) {
            return Err(Error::Invalid("remainder atoms must be nonnegative".into()));
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut cumulative = vec![0.0];
        for k in 1..density.breaks.len() {
            let (a, b) = density.piece_bounds(k);
            let last = *cumulative.last().unwrap();
            cumulative.push(last + integrate_rational(&density.pieces[k], a, b));
        }
        Ok(RemainderMeasure {
            density,
            atoms,
            cumulative,
        })
    }

    pub fn zero() -> Self {
        RemainderMeasure {
            density: PiecewiseRational {
                breaks: vec![],
                pieces: vec![Rational::poly(Poly::zero())],
            },
            atoms: vec![],
            cumulative: vec![],
        }
    }

    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        RemainderMeasure::new(RemainderMeasure::zero().density, atoms)
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.density.eval(x)
    }

    /// `∫_{(-∞, x)}` of the continuous part.
    pub fn continuous_below(&self, x: f64) -> f64 {
        let b = &self.density.breaks;
        if b.is_empty() {
            return 0.0;
        }
        let k = b.partition_point(|&t| t <= x);
        if k == 0 {
            return 0.0;
        }
        if k == b.len() {
            return *self.cumulative.last().unwrap();
        }
        self.cumulative[k - 1] + integrate_rational(&self.density.pieces[k], b[k - 1], x)
    }

    /// `∫_0^x` of the continuous part, negative for `x < 0`.
    pub fn continuous_from_origin(&self, x: f64) -> f64 {
        self.continuous_below(x) - self.continuous_below(0.0)
    }

    pub fn continuous_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn atom_at(&self, x: f64) -> f64 {
        self.atoms.iter().find(|a| a.0 == x).map(|a| a.1).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.continuous_mass() + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }
}

fn push_atom(atoms: &mut Vec<(f64, f64)>, x: f64, m: f64) {
    if m == 0.0 {
        return;
    }
    match atoms.iter_mut().find(|a| a.0 == x) {
        Some(a) => a.1 += m,
        None => atoms.push((x, m)),
    }
}

fn jump_is_roundoff(l: f64, r: f64) -> bool {
    (r - l).abs() <= 64.0 * f64::EPSILON * l.abs().max(r.abs()).max(1.0)
}

/// Remainder measure
/// `h⁻¹|α⁻¹(b₁² - b²) + β⁻¹V₀| + |α^A d(φ')| + |(φ')^A dα| + 4h⁻¹|φ'|(b² + |b|)
///  + |d(β⁻¹α(E - V₁) + α²(φ')² + b₁²)|`.
pub fn build_mu(spec: &CoefficientSpec, phase: &PhaseSpec, e: f64) -> Result<RemainderMeasure> {
    let h = spec.h;
    let g = threshold(spec, phase, e);
    let mut breaks = common_breaks(&[
        &spec.alpha,
        &spec.beta,
        &spec.b0,
        &spec.b1,
        &spec.v0.density,
        &spec.v1,
        &phase.slope,
    ]);
    breaks.extend(g.breaks.iter().copied());
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup();

    let mut out_breaks = Vec::new();
    let mut out_pieces = Vec::new();
    for k in 0..=breaks.len() {
        let (lo, hi) = bounds(&breaks, k);
        let x = probe(lo, hi);
        let a = piece_at(&spec.alpha, x);
        let bt = piece_at(&spec.beta, x);
        let b1 = piece_at(&spec.b1, x);
        let bb = piece_at(&spec.b0, x).add(&b1);
        let v0 = piece_at(&spec.v0.density, x);
        let ph = piece_at(&phase.slope, x);
        let gk = &g.pieces[g.breaks.partition_point(|&t| t <= x)];
        let terms: Vec<Rational> = vec![
            Rational {
                num: b1.mul(&b1).sub(&bb.mul(&bb)),
                den: a.clone(),
            }
            .add(&Rational {
                num: v0,
                den: bt,
            })
            .scale(1.0 / h),
            Rational::poly(a.mul(&ph.deriv())),
            Rational::poly(ph.mul(&a.deriv())),
            Rational::poly(ph.mul(&bb).mul(&bb).scale(4.0 / h)),
            Rational::poly(ph.mul(&bb).scale(4.0 / h)),
            gk.deriv(),
        ]
        .into_iter()
        .filter(|r| !r.num.is_zero())
        .collect();
        if k > 0 {
            out_breaks.push(lo);
        }
        if terms.is_empty() {
            out_pieces.push(Rational::poly(Poly::zero()));
            continue;
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid("remainder measure has infinite mass".into()));
        }
        let mut cuts: Vec<f64> = terms.iter().flat_map(|r| r.num.roots_in(lo, hi)).collect();
        cuts.retain(|&c| c > lo && c < hi);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut pts = vec![lo];
        pts.extend(cuts);
        pts.push(hi);
        for (i, w) in pts.windows(2).enumerate() {
            if i > 0 {
                out_breaks.push(w[0]);
            }
            let m = 0.5 * (w[0] + w[1]);
            let mut sum = Rational::poly(Poly::zero());
            for t in &terms {
                let s = if t.eval(m) < 0.0 { -1.0 } else { 1.0 };
                sum = sum.add(&t.scale(s));
            }
            out_pieces.push(sum);
        }
    }

    let mut atoms = Vec::new();
    for &(x, m) in &spec.v0.atoms {
        push_atom(&mut atoms, x, m.abs() / (h * spec.beta.eval(x)));
    }
    for (k, &x) in phase.slope.breaks.iter().enumerate() {
        let j = phase.slope.jump(k);
        if !jump_is_roundoff(phase.slope.left(x), phase.slope.right(x)) {
            push_atom(&mut atoms, x, j.abs() * spec.alpha.eval(x));
        }
    }
    for (k, &x) in spec.alpha.breaks.iter().enumerate() {
        push_atom(&mut atoms, x, spec.alpha.jump(k).abs() * phase.slope.eval(x).abs());
    }
    for (k, &x) in g.breaks.iter().enumerate() {
        let l = g.pieces[k].eval(x);
        let r = g.pieces[k + 1].eval(x);
        if !jump_is_roundoff(l, r) {
            push_atom(&mut atoms, x, (r - l).abs());
        }
    }
    RemainderMeasure::new(
        PiecewiseRational {
            breaks: out_breaks,
            pieces: out_pieces,
        },
        atoms,
    )
}

/// `∫_0^X ⟨t⟩^{-2s} dt` for `s > 1/2`, `X ∈ [0, ∞]`.
pub fn bracket_integral(s: f64, x: f64) -> f64 {
    let f = |t: f64| (1.0 + t * t).powf(-s);
    let rule = GaussRule::get(32);
    if x <= 1.0 {
        return rule.integrate(0.0, x, f);
    }
    let head = rule.integrate(0.0, 1.0, f);
    // t = 1/r, ρ = r^{2s-1}
    let p = 2.0 / (2.0 * s - 1.0);
    let g = |rho: f64| (1.0 + rho.powf(p)).powf(-s);
    let rho0 = if x.is_finite() { x.powf(1.0 - 2.0 * s) } else { 0.0 };
    let rule16 = GaussRule::get(16);
    let mut sum = 0.0;
    let mut b = 1.0f64;
    for _ in 0..80 {
        let a = (0.5 * b).max(rho0);
        sum += rule16.integrate(a, b, g);
        b = a;
        if b <= rho0 || b < 1e-300 {
            break;
        }
    }
    head + sum / (2.0 * s - 1.0)
}

/// `∫_0^∞ ⟨t⟩^{-2s} dt = √π Γ(s - 1/2) / (2Γ(s))`.
pub fn bracket_total(s: f64) -> f64 {
    PI.sqrt() * libm::tgamma(s - 0.5) / (2.0 * libm::tgamma(s))
}

/// Weight data attached to one atom of the remainder measure away from the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomWeight {
    pub x: f64,
    pub mass: f64,
    /// `W_j = M μ_j`
    pub w: f64,
    /// `γ_j = e^{-W_j/4}`
    pub gamma: f64,
    /// `Γ_j`: continuous mass from the origin plus the weights of atoms strictly between.
    pub gamma_sum: f64,
    /// `ln lim_{η→0} |w_η(x_j)|`
    pub log_limit: f64,
}

/// Regularized weight `w_η = sgn(x) e^{q₁,η}(e^{q₂} - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanWeight {
    pub tau: f64,
    pub s: f64,
    /// `κ = max(2, 1/τ)`
    pub kappa: f64,
    /// `M = max(2, 8/τ)`
    pub m_factor: f64,
    pub eta: f64,
    pub mu: RemainderMeasure,
    pub atoms: Vec<AtomWeight>,
    /// Mass of the remainder at the origin, where the weight vanishes.
    pub origin_mass: f64,
    /// `ln C_w` with `C_w = e^{κμ_c(ℝ) + ΣW_j}(e^{κ I_s} - 1) ≥ sup |w_η|`.
    pub log_sup_bound: f64,
}

impl CarlemanWeight {
    /// The continuous part of the remainder enters `q₁` scaled by `κ`.
    pub fn new(mu: RemainderMeasure, tau: f64, s: f64, eta: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Hypothesis(format!("threshold tau = {tau} is not positive")));
        }
        if !(s > 0.5) || !(eta > 0.0) {
            return Err(Error::Invalid(format!("weight needs s > 1/2 and eta > 0 (got {s}, {eta})")));
        }
        let kappa = (1.0 / tau).max(2.0);
        let m_factor = (8.0 / tau).max(2.0);
        let mut weight = CarlemanWeight {
            tau,
            s,
            kappa,
            m_factor,
            eta,
            origin_mass: mu.atom_at(0.0),
            atoms: vec![],
            log_sup_bound: 0.0,
            mu,
        };
        let raw: Vec<(f64, f64)> = weight.mu.atoms.iter().copied().filter(|a| a.0 != 0.0).collect();
        let mut atoms = Vec::with_capacity(raw.len());
        for &(x, mass) in &raw {
            let w = m_factor * mass;
            let between: f64 = raw
                .iter()
                .filter(|&&(y, _)| y.signum() == x.signum() && y.abs() < x.abs())
                .map(|&(_, m)| m_factor * m)
                .sum();
            let gamma_sum = kappa * weight.mu.continuous_from_origin(x).abs() + between;
            let log_limit = gamma_sum + weight.q2(x).exp_m1().ln() + 0.5 * w;
            atoms.push(AtomWeight {
                x,
                mass,
                w,
                gamma: (-0.25 * w).exp(),
                gamma_sum,
                log_limit,
            });
        }
        weight.atoms = atoms;
        let sum_w: f64 = weight.atoms.iter().map(|a| a.w).sum();
        weight.log_sup_bound =
            kappa * weight.mu.continuous_mass() + sum_w + (kappa * bracket_total(s)).exp_m1().ln();
        Ok(weight)
    }

    /// `ln C_w` with the exponent `μ_c(ℝ) + ½ΣW_j` and no `κ` on the continuous part.
    pub fn displayed_log_sup_bound(&self) -> f64 {
        let sum_w: f64 = self.atoms.iter().map(|a| a.w).sum();
        self.mu.continuous_mass() + 0.5 * sum_w + (self.kappa * bracket_total(self.s)).exp_m1().ln()
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        CarlemanWeight::new(self.mu.clone(), self.tau, self.s, eta)
    }

    pub fn q1(&self, x: f64) -> f64 {
        let sg = if x >= 0.0 { 1.0 } else { -1.0 };
        let reg: f64 = self
            .atoms
            .iter()
            .map(|a| 0.5 * a.w * (libm::erf((x - a.x) / self.eta) + libm::erf(a.x / self.eta)))
            .sum();
        sg * (self.kappa * self.mu.continuous_from_origin(x) + reg)
    }

    pub fn q2(&self, x: f64) -> f64 {
        self.kappa * bracket_integral(self.s, x.abs())
    }

    /// `ln |w_η(x)|`, `-∞` at the origin.
    pub fn log_abs(&self, x: f64) -> f64 {
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.q1(x) + self.q2(x).exp_m1().ln()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        x.signum() * self.log_abs(x).exp()
    }

    /// Density of `dw_η`, which has no atoms.
    pub fn density(&self, x: f64) -> f64 {
        let q1 = self.q1(x);
        let q2 = self.q2(x);
        let gauss: f64 = self
            .atoms
            .iter()
            .map(|a| a.w * (-((x - a.x) / self.eta).powi(2)).exp())
            .sum::<f64>()
            / (PI.sqrt() * self.eta);
        let w = if x == 0.0 { 0.0 } else { (q1 + q2.exp_m1().ln()).exp() };
        self.kappa * japanese(x).powf(-2.0 * self.s) * (q1 + q2).exp()
            + w * (self.kappa * self.mu.density_at(x) + gauss)
    }

    pub fn limit_at(&self, j: usize) -> f64 {
        self.atoms[j].log_limit.exp()
    }
}

/// Weight for a coefficient set, phase and energy.
pub fn build_weight(spec: &CoefficientSpec, phase: &PhaseSpec, e: f64, s: f64, eta: f64) -> Result<CarlemanWeight> {
    let tau = compute_tau(spec, phase, e);
    if !(tau > 0.0) {
        return Err(Error::Hypothesis(format!(
            "threshold tau = {tau} is not positive for slope k = {}",
            phase.k
        )));
    }
    CarlemanWeight::new(build_mu(spec, phase, e)?, tau, s, eta)
}

/// Per-atom pair of inequalities that make the atom terms nonnegative as `η → 0`.
///
/// With `y = Mμ`, the first expressions are divided by `e^{3y/4}` and the second by
/// `e^{y/4}`, which keeps their signs and avoids overflow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomInequality {
    pub x: f64,
    pub mass: f64,
    /// `τe^{y} - 1 - 2μe^{3y/4}` and `2(e^{y/2} - 1) - μe^{y/4}`, scaled.
    pub displayed: [f64; 2],
    /// `τ(e^{y} - 1) - 2μe^{3y/4}` and `2(e^{y/2} - 1) - μe^{y/4}`, scaled.
    pub derived: [f64; 2],
}

impl AtomInequality {
    pub fn new(tau: f64, m_factor: f64, x: f64, mass: f64) -> Self {
        let y = m_factor * mass;
        let second = 2.0 * ((0.25 * y).exp() - (-0.25 * y).exp()) - mass;
        AtomInequality {
            x,
            mass,
            displayed: [tau * (0.25 * y).exp() - (-0.75 * y).exp() - 2.0 * mass, second],
            derived: [tau * ((0.25 * y).exp() - (-0.75 * y).exp()) - 2.0 * mass, second],
        }
    }

    pub fn holds(&self) -> bool {
        self.derived.iter().all(|&v| v >= 0.0)
    }

    pub fn displayed_holds(&self) -> bool {
        self.displayed.iter().all(|&v| v >= 0.0)
    }
}

pub fn check_atom_inequalities(weight: &CarlemanWeight) -> Vec<AtomInequality> {
    weight
        .atoms
        .iter()
        .map(|a| AtomInequality::new(weight.tau, weight.m_factor, a.x, a.mass))
        .collect()
}

/// Both sides of the weighted estimate for one right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSides {
    /// `∫⟨x⟩^{-2s}(|e^{φ/h}v|² + |(hα∂ + ib)e^{φ/h}v|²)`
    pub lhs: f64,
    /// `∫⟨x⟩^{2s}|(P - E - iε)v|²`, from the operator applied to the solution.
    pub rhs_f: f64,
    /// `|ε|∫|v|²`
    pub rhs_eps: f64,
    /// `∫|f|²` for the data `f` with `(P - E - iε)v = ⟨x⟩^{-s}f`.
    pub data: f64,
    pub residual: f64,
}

impl EstimateSides {
    /// `ln(lhs / (rhs_f + rhs_eps))`
    pub fn log_ratio(&self) -> f64 {
        self.lhs.ln() - (self.rhs_f + self.rhs_eps).ln()
    }

    pub fn holds(&self, c: &ConstantReport) -> bool {
        self.lhs == 0.0 || self.log_ratio() <= c.log_c
    }
}

/// Mesh containing the coefficient core, the phase taper and `pad` on either side.
pub fn estimate_mesh(spec: &CoefficientSpec, phase: &PhaseSpec, point: &SpectralPoint, pad: f64) -> Arc<Mesh> {
    let (a, b) = spec.core_interval();
    let r = 2.0 * phase.r1;
    let mut extra = phase.knots();
    extra.push(0.0);
    resolvent_mesh(spec, point.z(), a.min(-r) - pad, b.max(r) + pad, &extra)
}

fn tail_moments(field: &SolutionField, right: bool, s: f64) -> (f64, f64) {
    let m = &field.grid.mesh;
    let (x0, sigma, mode, tail, dir) = if right {
        (m.hi(), field.sigma_r, field.mode_r, field.tail_r, 1.0)
    } else {
        (m.lo(), field.sigma_l, field.mode_l, field.tail_l, -1.0)
    };
    let k = (2.0 * sigma.re * dir).min(0.0);
    let amp = tail.norm_sqr();
    if amp == 0.0 {
        return (0.0, 0.0);
    }
    let m2 = mode[0].norm_sqr() + mode[1].norm_sqr() / (field.h * field.h);
    let weighted = amp * m2 * tail_integral(k, |t| japanese(x0 + dir * t).powf(-2.0 * s));
    let plain = if k < 0.0 {
        amp * mode[0].norm_sqr() / -k
    } else {
        f64::INFINITY
    };
    (weighted, plain)
}

/// Solves `(P - E - iε)v = ⟨x⟩^{-s}f` and evaluates both sides of the estimate.
/// The mesh of `f` must cover `[-2R₁, 2R₁]` and have the phase knots as edges.
pub fn evaluate_estimate(
    spec: &CoefficientSpec,
    phase: &PhaseSpec,
    point: &SpectralPoint,
    s: f64,
    f: &GridFunction,
) -> Result<EstimateSides> {
    let mesh = f.mesh.clone();
    if mesh.lo() > -2.0 * phase.r1 || mesh.hi() < 2.0 * phase.r1 {
        return Err(Error::Invalid("mesh does not cover the phase taper".into()));
    }
    let h = spec.h;
    let g = GridFunction {
        u: mesh.x.iter().zip(&f.u).map(|(&x, v)| v * japanese(x).powf(-s)).collect(),
        p: vec![Default::default(); mesh.len()],
        mesh: mesh.clone(),
    };
    let field = solve(spec, point, &g)?;
    let v = &field.grid;
    let z = point.z();
    let mut lhs = 0.0;
    let mut mass = 0.0;
    let mut data = 0.0;
    for (i, &x) in mesh.x.iter().enumerate() {
        let e2 = (2.0 * phase.eval(x) / h).exp();
        let q = v.p[i] + spec.alpha.eval(x) * phase.deriv(x) * v.u[i];
        lhs += mesh.w[i] * japanese(x).powf(-2.0 * s) * e2 * (v.u[i].norm_sqr() + q.norm_sqr());
        mass += mesh.w[i] * v.u[i].norm_sqr();
        data += mesh.w[i] * f.u[i].norm_sqr();
    }
    let edge_phase = (2.0 * phase.sup() / h).exp();
    for right in [false, true] {
        let (weighted, plain) = tail_moments(&field, right, s);
        lhs += edge_phase * weighted;
        mass += plain;
    }
    let scale = v.p.iter().map(|p| p.norm()).fold(0.0, f64::max) * h + 1.0;
    let pv = apply_operator(v, spec, 1e-6 * scale)?;
    let rhs_f: f64 = mesh
        .x
        .iter()
        .enumerate()
        .map(|(i, &x)| mesh.w[i] * japanese(x).powf(2.0 * s) * (pv[i] - z * v.u[i]).norm_sqr())
        .sum();
    let rhs_eps = if point.eps == 0.0 { 0.0 } else { point.eps.abs() * mass };
    Ok(EstimateSides {
        lhs,
        rhs_f,
        rhs_eps,
        data,
        residual: field.residual,
    })
}

/// One named factor of the assembled constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub role: String,
    pub value: f64,
}

/// `C(h)` in log form with the factors it is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub log_c: f64,
    /// Log of the coefficient of `∫|f|²`.
    pub log_c_data: f64,
    /// Log of the coefficient of `|ε|∫|v|²`.
    pub log_c_eps: f64,
    pub eps_max: f64,
    pub factors: Vec<Factor>,
}

impl ConstantReport {
    pub fn value(&self) -> f64 {
        self.log_c.exp()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Assembles `C(h)` for `|ε| ≤ eps_max` from the weight supremum, the phase
/// amplification, the Young splittings and the form bound.
pub fn constant_report(
    spec: &CoefficientSpec,
    phase: &PhaseSpec,
    weight: &CarlemanWeight,
    point: &SpectralPoint,
    eps_max: f64,
) -> ConstantReport {
    let h = spec.h;
    let ia = spec.inf_alpha();
    let ib = spec.inf_beta();
    let sa = spec.alpha.sup();
    let ln_cw = weight.log_sup_bound;
    let two_phi = 2.0 * phase.sup() / h;
    let f_scale = (1.0 / (ib * ib)).max(1.0);
    let ln_a1 = -2.0 * h.ln() + ln_cw + f_scale.ln();
    let ln_a2 = ln_cw - h.ln() - ib.ln();

    let e_minus_v1 = spec.v1.scale(-1.0).map(|p| p.add_const(point.e)).sup_abs();
    let b1 = spec.b1.sup_abs();
    let b0sq = spec.b0.lp_norm_pow(2);
    let v0 = spec.v0.total_variation();
    let c_n = 0.5 / ib + (1.0 / ib).max(1.0) * e_minus_v1 + 4.0 * b1 * b1 / ia;
    let c_inf = v0 / ib + 4.0 * b0sq / ia;
    let (g_f, g_n) = if c_inf > 0.0 {
        (2.0 / ib, 4.0 * (c_n + c_inf * c_inf / (h * h * ia)))
    } else {
        (1.0 / ib, 2.0 * c_n)
    };
    let a_phi = spec.alpha.mul(&phase.slope).sup_abs();
    let q_g = sa + b0sq;
    let q_n = 2.0 * a_phi * a_phi + 2.0 * b1 * b1 + b0sq / (h * h * ia);

    let ln_eps_part = if eps_max > 0.0 {
        eps_max.ln() + ln_a2 + (2.0 * q_g * g_f).ln()
    } else {
        f64::NEG_INFINITY
    };
    let log_c_data = two_phi + log_add(ln_a1, ln_eps_part);
    let log_c_eps = two_phi + ln_a2 + (2.0 * q_g * g_n + 2.0 * q_n + 1.0).ln();
    let log_c = if eps_max > 0.0 { log_c_data.max(log_c_eps) } else { log_c_data };

    let fac = |name: &str, role: &str, value: f64| Factor {
        name: name.into(),
        role: role.into(),
        value,
    };
    ConstantReport {
        log_c,
        log_c_data,
        log_c_eps,
        eps_max,
        factors: vec![
            fac("ln_C_w", "bound on sup |w_eta| over x and eta", ln_cw),
            fac("ln_C_w_displayed", "same bound with half the atom weights and no kappa", weight.displayed_log_sup_bound()),
            fac("tau", "threshold infimum", weight.tau),
            fac("kappa", "max(2, 1/tau)", weight.kappa),
            fac("M", "max(2, 8/tau)", weight.m_factor),
            fac("mu_c_mass", "continuous remainder mass", weight.mu.continuous_mass()),
            fac("sum_W", "sum of atom weights", weight.atoms.iter().map(|a| a.w).sum()),
            fac("two_sup_phi_over_h", "phase amplification exponent", two_phi),
            fac("data_beta_factor", "max(1, 1/inf beta^2) on the data term", f_scale),
            fac("ln_A1", "log coefficient of the weighted data term", ln_a1),
            fac("ln_A2", "log C_w / (h inf beta), coefficient of the eps term", ln_a2),
            fac("form_c_n", "mass coefficient in the gradient bound", c_n),
            fac("form_c_inf", "sup-norm coefficient in the gradient bound", c_inf),
            fac("form_g_f", "data coefficient of the gradient bound", g_f),
            fac("form_g_n", "mass coefficient of the gradient bound", g_n),
            fac("grad_q_g", "gradient coefficient for the conjugated derivative", q_g),
            fac("grad_q_n", "mass coefficient for the conjugated derivative", q_n),
            fac("eps_max", "bound on |eps|", eps_max),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> CoefficientSpec {
        CoefficientSpec::free(1.0)
    }

    fn well(depth: f64) -> CoefficientSpec {
        CoefficientSpec {
            v1: PiecewiseBV::indicator(-1.0, 1.0, depth),
            ..unit()
        }
    }

    #[test]
    fn phase_shape() {
        let p = PhaseSpec::new(1.0, 2.0).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert!((p.eval(0.5) - 1.0).abs() < 1e-14);
        assert!((p.eval(-1.7) - p.eval(1.7)).abs() < 1e-14);
        assert_eq!(p.deriv(0.5), 2.0);
        assert_eq!(p.deriv(2.5), 0.0);
        assert!((p.sup() - 3.0).abs() < 1e-13);
        for i in 0..200 {
            assert!(p.deriv(i as f64 * 0.0123) >= 0.0);
        }
    }

    #[test]
    fn tau_examples() {
        assert_eq!(compute_tau(&unit(), &PhaseSpec::zero(), 1.0), 1.0);
        let p = PhaseSpec::new(1.0, 2.0).unwrap();
        assert!((compute_tau(&well(2.0), &p, 1.0) - 1.0).abs() < 1e-12);
        let s = CoefficientSpec {
            alpha: PiecewiseBV::bump(-1.0, 1.0, Poly::new(vec![1.5, 0.2, -0.4])),
            b1: PiecewiseBV::indicator(-1.0, 1.0, 1.0),
            v1: PiecewiseBV::indicator(-1.0, 1.0, 1.0),
            ..unit()
        };
        let s = CoefficientSpec {
            alpha: s.alpha.map(|q| q.add_const(0.0)).add(&PiecewiseBV::constant(0.0)),
            ..s
        };
        let tau = compute_tau(&s, &PhaseSpec::zero(), 1.0);
        let t = threshold(&s, &PhaseSpec::zero(), 1.0);
        let dense = (0..=40000)
            .map(|i| -3.0 + 6.0 * i as f64 / 40000.0)
            .map(|x| t.eval(x))
            .fold(f64::INFINITY, f64::min);
        assert!(tau <= dense + 1e-12 && dense - tau < 1e-6, "{tau} {dense}");
    }

    #[test]
    fn slope_choice() {
        assert_eq!(choose_phase_slope(&unit(), 1.0, 1.0, None).unwrap().k, 0.0);
        let p = choose_phase_slope(&well(2.0), 1.0, 1.0, None).unwrap();
        let want = 1.5f64.sqrt();
        assert!(p.k >= want && p.k <= want * 10f64.powf(1.0 / 64.0), "{}", p.k);
        let tail = CoefficientSpec {
            v1: PiecewiseBV::constant(2.0),
            ..unit()
        };
        assert!(matches!(choose_phase_slope(&tail, 1.0, 1.0, None), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn remainder_examples() {
        let mu = build_mu(&unit(), &PhaseSpec::zero(), 1.0).unwrap();
        assert_eq!(mu.total(), 0.0);
        let d = CoefficientSpec {
            v0: SignedMeasure::dirac(0.0, 1.0),
            ..unit()
        };
        let mu = build_mu(&d, &PhaseSpec::zero(), 1.0).unwrap();
        assert_eq!(mu.atoms, vec![(0.0, 1.0)]);
        assert_eq!(mu.continuous_mass(), 0.0);
        let step = CoefficientSpec {
            b1: PiecewiseBV::indicator(-1.0, 1.0, 1.0),
            ..unit()
        };
        let mu = build_mu(&step, &PhaseSpec::zero(), 1.0).unwrap();
        assert_eq!(mu.atoms, vec![(-1.0, 1.0), (1.0, 1.0)]);
        assert_eq!(mu.continuous_mass(), 0.0);
    }

    #[test]
    fn remainder_with_phase_matches_terms() {
        let s = well(2.0);
        let p = PhaseSpec::new(1.0, 2.0).unwrap();
        let mu = build_mu(&s, &p, 1.0).unwrap();
        // |d(φ')| + |d(φ'²)| on each taper, atoms at ±1 and the slope jump at 0
        let taper: f64 = 2.0 * (2.0 + 4.0);
        assert!((mu.continuous_mass() - taper).abs() < 1e-9, "{}", mu.continuous_mass());
        assert!((mu.atom_at(1.0) - 2.0).abs() < 1e-12);
        assert!((mu.atom_at(0.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bracket_integrals() {
        for x in [0.3f64, 1.0, 4.0, 1e3] {
            assert!((bracket_integral(1.0, x) - x.atan()).abs() < 1e-13);
            let want = 0.5 * (x / (1.0 + x * x) + x.atan());
            assert!((bracket_integral(2.0, x) - want).abs() < 1e-13);
        }
        for s in [0.6, 1.0, 1.7, 3.0] {
            assert!((bracket_integral(s, f64::INFINITY) - bracket_total(s)).abs() < 1e-11, "{s}");
        }
    }

    #[test]
    fn weight_without_atoms() {
        let w = CarlemanWeight::new(RemainderMeasure::zero(), 1.0, 1.0, 0.1).unwrap();
        assert_eq!(w.kappa, 2.0);
        assert_eq!(w.eval(0.0), 0.0);
        for x in [-3.0f64, -0.2, 0.7, 5.0] {
            let want = x.signum() * (2.0 * x.abs().atan()).exp_m1();
            assert!((w.eval(x) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn weight_atom_limit() {
        let mu = RemainderMeasure::from_atoms(vec![(1.0, 1.0)]).unwrap();
        let w = CarlemanWeight::new(mu, 1.0, 1.0, 1e-3).unwrap();
        assert_eq!((w.m_factor, w.atoms[0].w), (8.0, 8.0));
        let want = (2.0 * 1f64.atan()).exp_m1() * 4f64.exp();
        assert!((w.limit_at(0) - want).abs() < 1e-12 * want);
        assert!((w.eval(1.0) - want).abs() < 1e-3 * want);
        assert!(w.eval(50.0) <= w.log_sup_bound.exp());
        assert!(w.eval(50.0) > w.displayed_log_sup_bound().exp());
    }

    #[test]
    fn atom_inequality_examples() {
        let a = AtomInequality::new(1.0, 8.0, 1.0, 1.0);
        let e = |t: f64| t.exp();
        assert!((a.displayed[0] * e(6.0) - (e(8.0) - 1.0 - 2.0 * e(6.0))).abs() < 1e-9);
        assert!((a.displayed[1] * e(2.0) - (2.0 * (e(4.0) - 1.0) - e(2.0))).abs() < 1e-10);
        assert!(a.holds() && a.displayed_holds());
        let z = AtomInequality::new(1.0, 8.0, 1.0, 0.0);
        assert_eq!(z.displayed, [0.0, 0.0]);
        for m in [0.1, 1.0, 5.0] {
            let a = AtomInequality::new(0.5, 16.0, 1.0, m);
            assert!(a.holds() && a.displayed_holds(), "{m}");
        }
        let small = AtomInequality::new(0.5, 16.0, 1.0, 0.01);
        assert!(small.holds() && !small.displayed_holds());
    }

    fn random_data(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> GridFunction {
        let c: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| (rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let u = mesh
            .x
            .iter()
            .map(|&x| {
                c.iter()
                    .map(|&(x0, a, b)| C64::new(a, b) * (-(x - x0) * (x - x0) * 4.0).exp())
                    .sum()
            })
            .collect();
        GridFunction {
            u,
            p: vec![C64::default(); mesh.len()],
            mesh: mesh.clone(),
        }
    }

    #[test]
    fn free_estimate_holds() {
        let spec = unit();
        let phase = PhaseSpec::zero();
        let point = SpectralPoint::new(1.0, 0.1);
        let weight = build_weight(&spec, &phase, 1.0, 1.0, 1.0).unwrap();
        let c = constant_report(&spec, &phase, &weight, &point, 0.1);
        let mesh = estimate_mesh(&spec, &phase, &point, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let f = random_data(&mesh, &mut rng);
            let sides = evaluate_estimate(&spec, &phase, &point, 1.0, &f).unwrap();
            assert!((sides.rhs_f - sides.data).abs() < 1e-6 * sides.data, "{sides:?}");
            assert!(sides.holds(&c), "{sides:?} {}", c.log_c);
        }
        let zero = GridFunction::zeros(mesh.clone());
        let sides = evaluate_estimate(&spec, &phase, &point, 1.0, &zero).unwrap();
        assert_eq!((sides.lhs, sides.rhs_f, sides.rhs_eps), (0.0, 0.0, 0.0));
    }

    #[test]
    fn lhs_grows_with_slope() {
        let spec = well(2.0);
        let point = SpectralPoint::new(1.0, 0.1);
        let p1 = PhaseSpec::new(1.0, 1.3).unwrap();
        let p2 = PhaseSpec::new(1.0, 1.6).unwrap();
        let mesh = estimate_mesh(&spec, &p1, &point, 2.0);
        let f = random_data(&mesh, &mut ChaCha8Rng::seed_from_u64(9));
        let a = evaluate_estimate(&spec, &p1, &point, 1.0, &f).unwrap();
        let b = evaluate_estimate(&spec, &p2, &point, 1.0, &f).unwrap();
        assert!(b.lhs > a.lhs && (a.rhs_f - b.rhs_f).abs() < 1e-9 * a.rhs_f);
    }

    #[test]
    fn constant_monotonicity() {
        let spec = well(2.0);
        let point = SpectralPoint::new(1.0, 0.1);
        let p = PhaseSpec::new(1.0, 1.3).unwrap();
        let w = build_weight(&spec, &p, 1.0, 1.0, 1.0).unwrap();
        let big = constant_report(&spec, &p, &w, &point, 0.1);
        let flat = PhaseSpec::new(0.5, 1.3).unwrap();
        let small = constant_report(&spec, &flat, &w, &point, 0.1);
        assert!(small.log_c <= big.log_c);
        let with_atom = |m: f64| CoefficientSpec {
            v0: SignedMeasure::dirac(0.3, m),
            ..spec.clone()
        };
        let c1 = with_atom(1.0);
        let c2 = with_atom(2.0);
        let w1 = build_weight(&c1, &p, 1.0, 1.0, 1.0).unwrap();
        let w2 = build_weight(&c2, &p, 1.0, 1.0, 1.0).unwrap();
        let r1 = constant_report(&c1, &p, &w1, &point, 0.1);
        let r2 = constant_report(&c2, &p, &w2, &point, 0.1);
        assert!(r2.log_c >= r1.log_c);
    }
}
