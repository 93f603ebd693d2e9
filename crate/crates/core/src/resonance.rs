//! Outgoing continuation of the cutoff resolvent of an `h = 1` operator with
//! compactly supported coefficients: matching determinant, resonance search,
//! resonance-free strips and the threshold test.

use crate::bv::{PiecewiseBV, SignedMeasure};
use crate::error::{Error, Result};
use crate::linalg::{fit_line, LineFit, NormEstimate};
use crate::mesh::GridFunction;
use crate::operator::{CoefficientSpec, SpectralPoint};
use crate::resolvent::{resolvent_mesh, solve, Green, WeightPair, WeightedOperator, PANEL_BUDGET, PANEL_CAP, PANEL_ORDER};
use crate::transfer::{exterior_mode, wronskian, ExteriorRule, LogState, Transfer};
use crate::weights::{tail_integral, Cutoff, Weight};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Distance between the coefficient core and the launch points `±R₀`.
pub const LAUNCH_PAD: f64 = 0.25;

/// `|e^{log_abs}| · phase` with `|phase| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub log_abs: f64,
    pub phase: C64,
}

impl LogValue {
    pub fn value(&self) -> C64 {
        self.phase * self.log_abs.exp()
    }

    pub fn arg(&self) -> f64 {
        self.phase.arg()
    }

    fn from_parts(w: C64, log: f64) -> Self {
        let n = w.norm();
        if n == 0.0 {
            LogValue {
                log_abs: f64::NEG_INFINITY,
                phase: C64::new(1.0, 0.0),
            }
        } else {
            LogValue {
                log_abs: n.ln() + log,
                phase: w / n,
            }
        }
    }
}

/// Wronskian of the two outgoing solutions, launched with unit `u` at `±R₀` and
/// compared at the origin.
#[derive(Clone, Debug)]
pub struct MatchingDeterminant {
    pub spec: CoefficientSpec,
    pub radius: f64,
}

impl MatchingDeterminant {
    pub fn new(spec: &CoefficientSpec) -> Result<Self> {
        spec.validate()?;
        for right in [false, true] {
            let e = spec.exterior(right);
            if e.b != 0.0 || e.v != 0.0 {
                return Err(Error::Invalid("resonances need b and V with compact support".into()));
            }
        }
        let (a, b) = spec.core_interval();
        let radius = a.abs().max(b.abs()).max(spec.r0.unwrap_or(0.0)) + LAUNCH_PAD;
        Ok(MatchingDeterminant {
            spec: spec.clone(),
            radius,
        })
    }

    /// Entire version: the Wronskian stripped of the exterior exponentials only.
    /// Vanishes at `λ = 0` exactly when a bounded solution exists there.
    pub fn raw_log(&self, lambda: C64) -> Result<LogValue> {
        Ok(self.parts(lambda)?.0)
    }

    fn parts(&self, lambda: C64) -> Result<(LogValue, C64)> {
        let z = lambda * lambda;
        let rule = ExteriorRule::Outgoing(lambda);
        let (sl, ml) = exterior_mode(&self.spec, z, false, rule)?;
        let (sr, mr) = exterior_mode(&self.spec, z, true, rule)?;
        let tr = Transfer::new(&self.spec, z);
        // launched at the core ends; the factor e^{σ_L a + σ_R b} restores the
        // normalization at ±R₀ up to the λ-independent e^{(σ_L - σ_R)R₀}
        let (a, b) = self.spec.core_interval();
        let mut start = LogState::new(ml);
        tr.apply_atom(a, &mut start, true);
        let left = tr.propagate(a, 0.0, start)?;
        let right = tr.propagate(b, 0.0, LogState::new(mr))?;
        let w = wronskian(&left.v, &right.v);
        let ex = sl * a + sr * b;
        let mut out = LogValue::from_parts(w, left.log + right.log + ex.re);
        out.phase *= C64::new(0.0, ex.im).exp();
        Ok((out, wronskian(&ml, &mr)))
    }

    /// `D(λ)`: the raw determinant divided by the Wronskian of the exterior modes,
    /// identically one for constant coefficients.
    pub fn log_eval(&self, lambda: C64) -> Result<LogValue> {
        if lambda == C64::new(0.0, 0.0) {
            return Err(Error::Invalid("D is singular at λ = 0; use the threshold test".into()));
        }
        let (raw, free) = self.parts(lambda)?;
        let n = free.norm();
        Ok(LogValue {
            log_abs: raw.log_abs - n.ln(),
            phase: raw.phase * free.conj() / n,
        })
    }

    pub fn eval(&self, lambda: C64) -> Result<C64> {
        Ok(self.log_eval(lambda)?.value())
    }

    /// Newton iteration with a central-difference derivative.
    pub fn newton(&self, start: C64, tol: f64, max_iter: usize) -> Result<(C64, f64)> {
        let mut l = start;
        let mut d = self.eval(l)?;
        for _ in 0..max_iter {
            let step_h = 1e-6 * l.norm().max(1.0);
            let dp = (self.eval(l + step_h)? - self.eval(l - step_h)?) / (2.0 * step_h);
            if dp.norm() == 0.0 {
                break;
            }
            let step = d / dp;
            l -= step;
            d = self.eval(l)?;
            if d.norm() <= tol && step.norm() <= 1e-10 * l.norm().max(1.0) {
                break;
            }
        }
        Ok((l, d.norm()))
    }
}

/// Sampled departure of `D` from analyticity on a circle: the share of the
/// negative Fourier modes.
pub fn analyticity_residual(det: &MatchingDeterminant, center: C64, radius: f64, samples: usize) -> Result<f64> {
    let vals: Vec<C64> = (0..samples)
        .map(|k| det.eval(center + radius * C64::from_polar(1.0, 2.0 * PI * k as f64 / samples as f64)))
        .collect::<Result<_>>()?;
    let mut neg = 0.0;
    let mut total = 0.0;
    for m in 0..samples {
        let c: C64 = vals
            .iter()
            .enumerate()
            .map(|(k, v)| v * C64::from_polar(1.0, -2.0 * PI * (k * m) as f64 / samples as f64))
            .sum::<C64>()
            / samples as f64;
        total += c.norm_sqr();
        if m > samples / 2 {
            neg += c.norm_sqr();
        }
    }
    Ok((neg / total).sqrt())
}

/// Closed rectangle `[re.0, re.1] × [im.0, im.1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl Rect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Self {
        Rect {
            re: (re0.min(re1), re0.max(re1)),
            im: (im0.min(im1), im0.max(im1)),
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        self.re.0 <= z.re && z.re <= self.re.1 && self.im.0 <= z.im && z.im <= self.im.1
    }

    pub fn center(&self) -> C64 {
        C64::new(0.5 * (self.re.0 + self.re.1), 0.5 * (self.im.0 + self.im.1))
    }

    pub fn width(&self) -> f64 {
        self.re.1 - self.re.0
    }

    pub fn height(&self) -> f64 {
        self.im.1 - self.im.0
    }

    fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re.0, self.im.0),
            C64::new(self.re.1, self.im.0),
            C64::new(self.re.1, self.im.1),
            C64::new(self.re.0, self.im.1),
        ]
    }

    fn split(&self, frac: f64) -> (Rect, Rect) {
        if self.width() >= self.height() {
            let m = self.re.0 + frac * self.width();
            (Rect { re: (self.re.0, m), ..*self }, Rect { re: (m, self.re.1), ..*self })
        } else {
            let m = self.im.0 + frac * self.height();
            (Rect { im: (self.im.0, m), ..*self }, Rect { im: (m, self.im.1), ..*self })
        }
    }
}

/// Argument change of `D` along a segment, bisected until consecutive samples
/// differ by less than `π/3`.
fn segment_arg(det: &MatchingDeterminant, a: C64, b: C64) -> Result<f64> {
    let len = (b - a).norm();
    let n0 = ((8.0 * len * (det.radius + 1.0)).ceil() as usize).max(4);
    let mut total = 0.0;
    let mut prev = (a, det.log_eval(a)?);
    for k in 1..=n0 {
        let next_z = a + (b - a) * (k as f64 / n0 as f64);
        let next = (next_z, det.log_eval(next_z)?);
        total += refine_arg(det, prev, next, 0)?;
        prev = next;
    }
    Ok(total)
}

fn refine_arg(det: &MatchingDeterminant, a: (C64, LogValue), b: (C64, LogValue), depth: usize) -> Result<f64> {
    let d = (b.1.phase / a.1.phase).arg();
    if d.abs() < PI / 3.0 {
        return Ok(d);
    }
    if depth > 40 {
        return Err(Error::NoConvergence(format!("zero of D on the contour near {}", a.0)));
    }
    let mz = 0.5 * (a.0 + b.0);
    let m = (mz, det.log_eval(mz)?);
    Ok(refine_arg(det, a, m, depth + 1)? + refine_arg(det, m, b, depth + 1)?)
}

/// Winding number of `D` around the rectangle boundary.
pub fn winding(det: &MatchingDeterminant, r: &Rect) -> Result<i64> {
    let c = r.corners();
    let mut total = 0.0;
    for k in 0..4 {
        total += segment_arg(det, c[k], c[(k + 1) % 4])?;
    }
    let w = total / (2.0 * PI);
    if (w - w.round()).abs() > 0.1 {
        return Err(Error::NoConvergence(format!("non-integer winding {w:.4}")));
    }
    Ok(w.round() as i64)
}

/// A located zero of `D`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub lambda: C64,
    pub multiplicity: u32,
    /// `|D|` at the refined point.
    pub residual: f64,
    pub rect: Rect,
}

/// Certified strip `{λ₀ ≤ |Re λ| ≤ re_max, |Im λ| ≤ θ₀}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub lambda0: f64,
    pub re_max: f64,
    pub theta0: f64,
    pub certified: bool,
    /// Smallest grid value at which a rectangle had nonzero winding.
    pub failed_theta: Option<f64>,
    pub blocking: Vec<Resonance>,
}

/// Norm of the cutoff resolvent `χR(λ)χ` between `H^{k_in}` and `H^{k_out}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub lambda: C64,
    pub k_in: u8,
    pub k_out: u8,
    pub norm: f64,
    pub lower: f64,
    pub upper: f64,
    /// Relative change of the norm when the mesh is refined.
    pub refined_change: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub zeros: Vec<Resonance>,
    pub verified_rectangles: Vec<Rect>,
    /// Terminal rectangles whose zeros could not be separated or refined.
    pub unresolved: Vec<(Rect, i64)>,
    /// Subdivisions whose child windings did not add up to the parent.
    pub winding_mismatches: usize,
    pub strip: Option<Strip>,
    pub norm_rows: Vec<NormSample>,
}

/// `χ = 1` on `[-R₀ - pad, R₀ + pad]`, stored as a C² piecewise polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub chi: Cutoff,
}

impl CutoffSpec {
    pub fn new(inner: f64, outer: f64) -> Self {
        CutoffSpec {
            chi: Cutoff::new(inner, outer),
        }
    }

    pub fn around(spec: &CoefficientSpec) -> Self {
        let (a, b) = spec.core_interval();
        let r = a.abs().max(b.abs()) + LAUNCH_PAD;
        CutoffSpec::new(r, r + 1.0)
    }

    pub fn weight(&self) -> Weight {
        Weight::Bump(self.chi.clone())
    }
}

const SPLITS: [f64; 3] = [0.4937, 0.5311, 0.4622];

fn split_checked(det: &MatchingDeterminant, r: &Rect) -> Option<((Rect, i64), (Rect, i64))> {
    SPLITS.iter().find_map(|&f| {
        let (a, b) = r.split(f);
        match (winding(det, &a), winding(det, &b)) {
            (Ok(wa), Ok(wb)) => Some(((a, wa), (b, wb))),
            _ => None,
        }
    })
}

/// Zeros of `D` in a rectangle away from the origin by adaptive bisection and
/// Newton refinement. `tol` bounds `|D|` at a refined zero relative to the size
/// of `D` on the terminal rectangle.
pub fn find_resonances(spec: &CoefficientSpec, rect: &Rect, tol: f64) -> Result<ResonanceReport> {
    if rect.contains(C64::new(0.0, 0.0)) {
        return Err(Error::Invalid("the search rectangle must not contain λ = 0".into()));
    }
    let det = MatchingDeterminant::new(spec)?;
    let mut report = ResonanceReport::default();
    let w0 = winding(&det, rect)?;
    let mut stack = vec![(*rect, w0, 0usize)];
    while let Some((r, w, depth)) = stack.pop() {
        if w == 0 {
            report.verified_rectangles.push(r);
            continue;
        }
        if w < 0 {
            report.unresolved.push((r, w));
            continue;
        }
        let size = r.width().max(r.height());
        if w == 1 && size <= 0.25 {
            let scale = r
                .corners()
                .iter()
                .map(|&c| det.eval(c).map(|v| v.norm()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(1.0f64, f64::max);
            if let Ok((l, res)) = det.newton(r.center(), tol * scale, 60) {
                if r.contains(l) && res <= tol * scale {
                    report.zeros.push(Resonance {
                        lambda: l,
                        multiplicity: 1,
                        residual: res,
                        rect: r,
                    });
                    continue;
                }
            }
        }
        if w > 1 && size <= 1e-7 * r.center().norm().max(1.0) {
            let res = det.eval(r.center())?.norm();
            report.zeros.push(Resonance {
                lambda: r.center(),
                multiplicity: w as u32,
                residual: res,
                rect: r,
            });
            continue;
        }
        if depth >= 60 {
            report.unresolved.push((r, w));
            continue;
        }
        match split_checked(&det, &r) {
            Some(((a, wa), (b, wb))) => {
                if wa + wb != w {
                    report.winding_mismatches += 1;
                }
                stack.push((a, wa, depth + 1));
                stack.push((b, wb, depth + 1));
            }
            None => report.unresolved.push((r, w)),
        }
    }
    report.zeros.sort_by(|a, b| a.lambda.re.partial_cmp(&b.lambda.re).unwrap());
    Ok(report)
}

/// Largest pair `λ ↦ -conj(λ)` mismatch within a zero set.
pub fn symmetry_defect(zeros: &[Resonance]) -> f64 {
    zeros
        .iter()
        .map(|z| {
            let mirror = -z.lambda.conj();
            zeros.iter().map(|o| (o.lambda - mirror).norm()).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Unit-width rectangles covering `{λ₀ ≤ |Re λ| ≤ re_max, |Im λ| ≤ θ}`.
pub fn strip_rectangles(lambda0: f64, re_max: f64, theta: f64) -> Vec<Rect> {
    let n = ((re_max - lambda0).ceil() as usize).max(1);
    let dx = (re_max - lambda0) / n as f64;
    let mut out = vec![];
    for sgn in [1.0, -1.0] {
        for k in 0..n {
            let a = lambda0 + k as f64 * dx;
            out.push(Rect::new(sgn * a, sgn * (a + dx), -theta, theta));
        }
    }
    out
}

/// Largest `θ₀` in `theta_grid` (ascending) for which every rectangle of the
/// strip has winding zero. The first failing rectangle is searched for zeros.
pub fn strip_certificate(spec: &CoefficientSpec, lambda0: f64, re_max: f64, theta_grid: &[f64]) -> Result<ResonanceReport> {
    if !(lambda0 > 0.0 && re_max > lambda0) {
        return Err(Error::Invalid("strip needs 0 < λ₀ < re_max".into()));
    }
    let det = MatchingDeterminant::new(spec)?;
    let mut grid = theta_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut report = ResonanceReport::default();
    let mut strip = Strip {
        lambda0,
        re_max,
        theta0: 0.0,
        certified: false,
        failed_theta: None,
        blocking: vec![],
    };
    'outer: for &theta in &grid {
        let rects = strip_rectangles(lambda0, re_max, theta);
        for r in &rects {
            let w = winding(&det, r)?;
            if w != 0 {
                strip.failed_theta = Some(theta);
                let sub = find_resonances(spec, r, 1e-10)?;
                strip.blocking = sub.zeros;
                break 'outer;
            }
        }
        strip.theta0 = theta;
        strip.certified = theta > 0.0;
        report.verified_rectangles = rects;
    }
    report.strip = Some(strip);
    Ok(report)
}

fn cutoff_norm_on(
    spec: &CoefficientSpec,
    weights: &WeightPair,
    lambda: C64,
    budget: f64,
    cap: f64,
    iters: usize,
    seed: u64,
) -> Result<NormEstimate> {
    let z = lambda * lambda;
    let outer = weights.input.support().map_or(0.0, |s| s.1).max(weights.output.support().map_or(0.0, |s| s.1));
    let (a, b) = spec.core_interval();
    let lo = (-outer).min(a) - 0.5;
    let hi = outer.max(b) + 0.5;
    let knots = weights.knots();
    let mesh = Arc::new(spec.mesh(lo, hi, z, &knots, PANEL_ORDER, budget, cap));
    let green = Green::new(spec, z, mesh, ExteriorRule::Outgoing(lambda))?;
    Ok(WeightedOperator::new(green, weights.clone()).norm(iters, seed, 1e-4))
}

/// `‖χR(λ)χ‖_{H^{k_in} → H^{k_out}}` for the continued resolvent, with a
/// mesh-refinement check (accepted when the change is below 2%).
pub fn cutoff_resolvent_norm(
    spec: &CoefficientSpec,
    cutoff: &CutoffSpec,
    lambda: C64,
    k_in: u8,
    k_out: u8,
    iters: usize,
    seed: u64,
) -> Result<NormSample> {
    MatchingDeterminant::new(spec)?;
    if lambda == C64::new(0.0, 0.0) {
        return Err(Error::Invalid("λ = 0 is not sampled".into()));
    }
    let weights = WeightPair {
        input: cutoff.weight(),
        output: cutoff.weight(),
        input_h1: k_in == 1,
        output_h1: k_out == 1,
    };
    let coarse = cutoff_norm_on(spec, &weights, lambda, PANEL_BUDGET, PANEL_CAP, iters, seed)?;
    let fine = cutoff_norm_on(spec, &weights, lambda, PANEL_BUDGET / 2.0, PANEL_CAP / 2.0, iters, seed)?;
    let change = (fine.value() - coarse.value()).abs() / fine.value().max(1e-300);
    Ok(NormSample {
        lambda,
        k_in,
        k_out,
        norm: fine.value(),
        lower: fine.lower,
        upper: fine.upper,
        refined_change: change,
        accepted: change < 0.02 && fine.converged,
    })
}

/// Norm rows at `Re λ` values in all four `(k_in, k_out)` combinations, on the
/// real axis and at `Im λ = -θ`.
pub fn norm_rows(spec: &CoefficientSpec, cutoff: &CutoffSpec, re_values: &[f64], theta: f64, iters: usize, seed: u64) -> Result<Vec<NormSample>> {
    use rayon::prelude::*;
    let mut jobs = vec![];
    for &re in re_values {
        for im in [0.0, -theta] {
            for k_in in 0..2u8 {
                for k_out in 0..2u8 {
                    jobs.push((C64::new(re, im), k_in, k_out));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(l, a, b)| cutoff_resolvent_norm(spec, cutoff, l, a, b, iters, seed))
        .collect()
}

/// Fitted exponent of `norm` against `|Re λ|` for one variant and one `Im λ`.
pub fn norm_exponent(rows: &[NormSample], k_in: u8, k_out: u8, im: f64) -> Option<LineFit> {
    let sel: Vec<&NormSample> = rows
        .iter()
        .filter(|r| r.k_in == k_in && r.k_out == k_out && (r.lambda.im - im).abs() < 1e-12)
        .collect();
    let x: Vec<f64> = sel.iter().map(|r| r.lambda.re.abs().ln()).collect();
    let y: Vec<f64> = sel.iter().map(|r| r.norm.ln()).collect();
    fit_line(&x, &y)
}

/// Threshold behaviour of `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroResonanceReport {
    pub has_zero_resonance: bool,
    /// `|raw D(0)|` relative to the size of the raw determinant on `|λ| = 1`.
    pub margin: f64,
    pub direct: f64,
    pub extrapolated: f64,
    pub scale: f64,
    /// `(λ, raw D(λ))` on the four diagonal rays.
    pub samples: Vec<(C64, C64)>,
    pub inconclusive: bool,
    pub chain: Option<ChainReport>,
}

pub const ZERO_RESONANCE_THRESHOLD: f64 = 1e-6;

fn raw_value(det: &MatchingDeterminant, l: C64) -> Result<C64> {
    Ok(det.raw_log(l)?.value())
}

/// Threshold test from ray samples at `|λ| ∈ {1e-2, 1e-3, 1e-4}` and a direct
/// evaluation with the constant exterior solutions at `λ = 0`.
pub fn zero_resonance_test(spec: &CoefficientSpec) -> Result<ZeroResonanceReport> {
    let det = MatchingDeterminant::new(spec)?;
    let radii = [1e-2, 1e-3, 1e-4];
    let mut samples = vec![];
    let mut extrap = C64::new(0.0, 0.0);
    let mut scale = 0.0f64;
    for k in 0..4 {
        let dir = C64::from_polar(1.0, PI / 4.0 * (2 * k + 1) as f64);
        let v: Vec<C64> = radii.iter().map(|&r| raw_value(&det, dir * r)).collect::<Result<_>>()?;
        for (r, val) in radii.iter().zip(&v) {
            samples.push((dir * *r, *val));
        }
        // quadratic interpolation in t = |λ| evaluated at t = 0
        let (t0, t1, t2) = (radii[0], radii[1], radii[2]);
        let l0 = t1 * t2 / ((t0 - t1) * (t0 - t2));
        let l1 = t0 * t2 / ((t1 - t0) * (t1 - t2));
        let l2 = t0 * t1 / ((t2 - t0) * (t2 - t1));
        extrap += (v[0] * l0 + v[1] * l1 + v[2] * l2) / 4.0;
        scale = scale.max(raw_value(&det, dir)?.norm());
    }
    let direct = raw_value(&det, C64::new(0.0, 0.0))?.norm();
    let scale = scale.max(1e-300);
    let margin = direct / scale;
    let has = margin <= ZERO_RESONANCE_THRESHOLD;
    let disagree = (extrap.norm() - direct).abs() > 1e-3 * scale;
    let grey = margin > ZERO_RESONANCE_THRESHOLD && margin < 100.0 * ZERO_RESONANCE_THRESHOLD;
    let chain = match example_strength(spec) {
        Some(m) => Some(weighted_chain_check(m, 0.5, &[0.1, 0.01], 4, 0)?),
        None => None,
    };
    Ok(ZeroResonanceReport {
        has_zero_resonance: has,
        margin,
        direct,
        extrapolated: extrap.norm(),
        scale,
        samples,
        inconclusive: disagree || grey,
        chain,
    })
}

/// `α = β = 1`, `b = 1_{[-1,1]}`, `V = M·1_{[-1,1]}`.
pub fn barrier_example(m: f64) -> CoefficientSpec {
    CoefficientSpec {
        b1: PiecewiseBV::indicator(-1.0, 1.0, 1.0),
        v1: PiecewiseBV::indicator(-1.0, 1.0, m),
        v0: SignedMeasure::zero(),
        ..CoefficientSpec::free(1.0)
    }
}

/// `M` when the spec is [`barrier_example`] for some `M > 0`.
pub fn example_strength(spec: &CoefficientSpec) -> Option<f64> {
    if spec.h != 1.0 || !spec.v0.atoms.is_empty() || spec.knots() != vec![-1.0, 1.0] {
        return None;
    }
    let unit = [&spec.alpha, &spec.beta].iter().all(|f| [-2.0, 0.0, 2.0].iter().all(|&x| f.eval(x) == 1.0));
    let b = spec.b();
    let v = spec.v_ac();
    let shape = [&b, &v].iter().all(|f| {
        [-1.0, 1.0].iter().all(|&x| {
            let k = f.piece_index(x);
            f.pieces[k].is_constant() && f.pieces[k - 1].is_constant()
        }) && f.eval(-2.0) == 0.0
            && f.eval(2.0) == 0.0
    });
    let m = v.eval(0.0);
    (unit && shape && b.eval(0.0) == 1.0 && m > 0.0).then_some(m)
}

/// One sample of the weighted-estimate chain for [`barrier_example`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub eps: f64,
    /// `‖(|x|+1)^{(3+δ)/2}(H - iε)u‖²`
    pub data: f64,
    /// `∫(|x|+1)^{-3-δ}|u|²`
    pub weighted: f64,
    pub grad: f64,
    pub inner: f64,
    /// `Re⟨(H - iε)u, u⟩`
    pub pairing: f64,
    /// Relative defect of the form identity for the pairing.
    pub identity_defect: f64,
    /// Slacks (`≥ 0` when the step holds) of the Young step, the lower bound,
    /// the weighted control and the final bound.
    pub slacks: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub m: f64,
    pub delta: f64,
    pub gamma: f64,
    /// `W ≤ bound · data`
    pub bound: f64,
    pub rows: Vec<ChainRow>,
    pub holds: bool,
}

/// Evaluates each step of the weighted estimate for the barrier example at
/// random data `(H - iε)u = (|x|+1)^{-(3+δ)/2} g`.
pub fn weighted_chain_check(m: f64, delta: f64, eps: &[f64], samples: usize, seed: u64) -> Result<ChainReport> {
    let spec = barrier_example(m);
    let gamma = (2.0 + delta) / 12.0;
    let bound = (12.0 / (2.0 + delta)).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 3.0 + delta;
    let mut rows = vec![];
    for &e in eps {
        let point = SpectralPoint::new(0.0, e);
        let mesh = resolvent_mesh(&spec, point.z(), -8.0, 8.0, &[0.0]);
        for _ in 0..samples {
            let centers: Vec<(f64, C64)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(-3.0..3.0),
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    )
                })
                .collect();
            let g = |x: f64| centers.iter().map(|(c, a)| a * (-(x - c) * (x - c)).exp()).sum::<C64>();
            let mut f = GridFunction::zeros(mesh.clone());
            for (i, &x) in mesh.x.iter().enumerate() {
                f.u[i] = g(x) * (x.abs() + 1.0).powf(-p / 2.0);
            }
            let sol = solve(&spec, &point, &f)?;
            let b = spec.b();
            let mut data = 0.0;
            let mut weighted = 0.0;
            let mut grad = 0.0;
            let mut inner = 0.0;
            let mut cross = 0.0;
            let mut pairing = 0.0;
            for (i, &x) in mesh.x.iter().enumerate() {
                let w = mesh.w[i];
                let u = sol.grid.u[i];
                let du = sol.grid.p[i] - I * b.eval(x) * u;
                data += w * g(x).norm_sqr();
                weighted += w * (x.abs() + 1.0).powf(-p) * u.norm_sqr();
                grad += w * du.norm_sqr();
                pairing += w * (f.u[i] * u.conj()).re;
                if x.abs() < 1.0 {
                    inner += w * u.norm_sqr();
                    cross += w * (du.conj() * u).im;
                }
            }
            for right in [false, true] {
                let (x0, sigma, mode, tail, dir) = if right {
                    (mesh.hi(), sol.sigma_r, sol.mode_r, sol.tail_r, 1.0)
                } else {
                    (mesh.lo(), sol.sigma_l, sol.mode_l, sol.tail_l, -1.0)
                };
                let amp = (tail * mode[0]).norm_sqr();
                let k = 2.0 * sigma.re * dir;
                weighted += amp * tail_integral(k, |t| (x0.abs() + t + 1.0).powf(-p));
                grad += amp * sigma.norm_sqr() * tail_integral(k, |_| 1.0);
            }
            let form = grad - 2.0 * cross + m * inner;
            let slacks = [
                data / (2.0 * gamma) + gamma / 2.0 * weighted - pairing,
                pairing - (0.5 * grad + (m - 2.0) * inner),
                0.5 * inner + 0.5 * grad - (2.0 + delta) / 12.0 * weighted,
                bound * data - weighted,
            ];
            rows.push(ChainRow {
                eps: e,
                data,
                weighted,
                grad,
                inner,
                pairing,
                identity_defect: (form - pairing).abs() / pairing.abs().max(1e-300),
                slacks,
            });
        }
    }
    let holds = m >= 2.5
        && rows.iter().all(|r| {
            let tol = 1e-8 * (r.data + r.pairing.abs() + r.weighted + r.grad);
            r.identity_defect < 1e-6 && r.slacks.iter().all(|&s| s >= -tol)
        });
    Ok(ChainReport {
        m,
        delta,
        gamma,
        bound,
        rows,
        holds,
    })
}

/// Norm growth exponent of `‖χR(λ)χ‖_{L²→L²}` approaching `target` along
/// `target + d·dir` for the given distances.
pub fn approach_exponent(spec: &CoefficientSpec, target: C64, dir: C64, distances: &[f64]) -> Result<LineFit> {
    let cutoff = CutoffSpec::around(spec);
    let mut x = vec![];
    let mut y = vec![];
    for &d in distances {
        let s = cutoff_resolvent_norm(spec, &cutoff, target + dir * d, 0, 0, 80, 1)?;
        x.push(d.ln());
        y.push(s.norm.ln());
    }
    fit_line(&x, &y).ok_or_else(|| Error::Invalid("need two distances".into()))
}

/// Resonance of `P(h)` closest to the real energy window `[e_lo, e_hi]`, located
/// from the smallest `|D|` on a real-axis scan and polished by Newton. Returns
/// `λ` with `z = λ²`; falls back to the scan minimum if Newton leaves the window.
pub fn window_resonance(spec: &CoefficientSpec, e_lo: f64, e_hi: f64, samples: usize) -> Result<C64> {
    if !(0.0 < e_lo && e_lo < e_hi) || samples < 2 {
        return Err(Error::Invalid("energy window must satisfy 0 < lo < hi".into()));
    }
    let det = MatchingDeterminant::new(spec)?;
    let (lo, hi) = (e_lo.sqrt(), e_hi.sqrt());
    let mut best = (f64::INFINITY, lo);
    for k in 0..samples {
        let l = lo + (hi - lo) * k as f64 / (samples - 1) as f64;
        let v = det.log_eval(C64::new(l, 0.0))?.log_abs;
        if v < best.0 {
            best = (v, l);
        }
    }
    let start = C64::new(best.1, 0.0);
    let (l, _) = det.newton(start, 1e-14, 60)?;
    let e = (l * l).re;
    Ok(if l.is_finite() && e >= e_lo && e <= e_hi && l.im <= 0.0 { l } else { start })
}
