//! The operator `P(h) = β(-h²∂α∂ + hbD + hDb) + V`, its form and domain conditions.

use crate::bv::{PiecewiseBV, SignedMeasure};
use crate::error::{Error, Result};
use crate::mesh::{GridFunction, Mesh};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Coefficients of `P(h)`. `b = b0 + b1` and `V = V0 + V1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub h: f64,
    pub alpha: PiecewiseBV,
    pub beta: PiecewiseBV,
    pub b0: PiecewiseBV,
    pub b1: PiecewiseBV,
    pub v0: SignedMeasure,
    pub v1: PiecewiseBV,
    pub r0: Option<f64>,
}

/// Constant coefficient values on one unbounded tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exterior {
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub v: f64,
}

/// Pointwise coefficients of the first-order system `Y' = (μI + [[0,a],[c,0]])Y + F`
/// for `Y = (u, h²αu' + ihbu)`.
#[derive(Clone, Copy, Debug)]
pub struct LocalSystem {
    pub mu: C64,
    pub a: C64,
    pub c: C64,
    pub beta: f64,
}

impl LocalSystem {
    pub fn new(h: f64, alpha: f64, beta: f64, b: f64, v: f64, z: C64) -> Self {
        LocalSystem {
            mu: C64::new(0.0, -b / (h * alpha)),
            a: C64::new(1.0 / (h * h * alpha), 0.0),
            c: (C64::new(v, 0.0) - z) / beta - b * b / alpha,
            beta,
        }
    }

    /// `|q| + |μ|` with `q² = ac`, the local oscillation/growth rate.
    pub fn rate(&self) -> f64 {
        (self.a * self.c).sqrt().norm() + self.mu.norm()
    }
}

impl CoefficientSpec {
    /// `α = β = 1`, all other coefficients zero.
    pub fn free(h: f64) -> Self {
        CoefficientSpec {
            h,
            alpha: PiecewiseBV::constant(1.0),
            beta: PiecewiseBV::constant(1.0),
            b0: PiecewiseBV::zero(),
            b1: PiecewiseBV::zero(),
            v0: SignedMeasure::zero(),
            v1: PiecewiseBV::zero(),
            r0: None,
        }
    }

    pub fn with_h(&self, h: f64) -> Self {
        CoefficientSpec { h, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Invalid(format!("h = {} must be positive", self.h)));
        }
        let ia = self.alpha.inf();
        if !(ia > 0.0) {
            return Err(Error::Positivity(format!("inf alpha = {ia} must be > 0")));
        }
        let ib = self.beta.inf();
        if !(ib > 0.0) {
            return Err(Error::Positivity(format!("inf beta = {ib} must be > 0")));
        }
        for (name, f) in [("alpha", &self.alpha), ("beta", &self.beta), ("b1", &self.b1), ("V1", &self.v1)] {
            if !f.tails_constant() {
                return Err(Error::Invalid(format!("{name} must be constant on both tails (bounded variation)")));
            }
        }
        if !self.b0.tails_zero() {
            return Err(Error::Invalid("b0 must have compact support".into()));
        }
        if !self.v0.density.tails_zero() {
            return Err(Error::Invalid("V0 must be a finite measure with compact support".into()));
        }
        if let Some(r) = self.r0 {
            if r < 0.0 {
                return Err(Error::Invalid("support radius must be nonnegative".into()));
            }
            for (name, s) in [("b0", self.b0.support()), ("V0", self.v0.support())] {
                if let Some((lo, hi)) = s {
                    if lo < -r || hi > r {
                        return Err(Error::Invalid(format!("{name} is not supported in [-{r}, {r}]")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn b(&self) -> PiecewiseBV {
        self.b0.add(&self.b1)
    }

    /// Absolutely continuous part of `V`.
    pub fn v_ac(&self) -> PiecewiseBV {
        self.v0.density.add(&self.v1)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.v0.atoms
    }

    pub fn inf_alpha(&self) -> f64 {
        self.alpha.inf()
    }

    pub fn inf_beta(&self) -> f64 {
        self.beta.inf()
    }

    /// All coefficient breakpoints and atom locations, sorted.
    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = [&self.alpha, &self.beta, &self.b0, &self.b1, &self.v0.density, &self.v1]
            .iter()
            .flat_map(|f| f.breaks.iter().copied())
            .chain(self.v0.atoms.iter().map(|a| a.0))
            .collect();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k.dedup();
        k
    }

    /// Interval outside of which every coefficient is constant.
    pub fn core_interval(&self) -> (f64, f64) {
        let k = self.knots();
        match (k.first(), k.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        }
    }

    pub fn exterior(&self, right: bool) -> Exterior {
        let pick = |f: &PiecewiseBV| {
            if right {
                f.pieces.last().unwrap().eval(0.0)
            } else {
                f.pieces[0].eval(0.0)
            }
        };
        Exterior {
            alpha: pick(&self.alpha),
            beta: pick(&self.beta),
            b: pick(&self.b0) + pick(&self.b1),
            v: pick(&self.v0.density) + pick(&self.v1),
        }
    }

    /// Coefficients of the first-order system at a point off the breakpoints.
    pub fn local(&self, x: f64, z: C64) -> LocalSystem {
        let b = self.b0.eval(x) + self.b1.eval(x);
        let v = self.v0.density.eval(x) + self.v1.eval(x);
        LocalSystem::new(self.h, self.alpha.eval(x), self.beta.eval(x), b, v, z)
    }

    /// True when every coefficient is constant on `(a, b)`.
    pub fn constant_on(&self, a: f64, b: f64) -> bool {
        let m = 0.5 * (a + b);
        [&self.alpha, &self.beta, &self.b0, &self.b1, &self.v0.density, &self.v1]
            .iter()
            .all(|f| f.pieces[f.piece_index(m)].is_constant())
    }

    /// Mesh on `[lo, hi]` aligned with the knots, with `rate · length ≤ budget`.
    pub fn mesh(&self, lo: f64, hi: f64, z: C64, extra: &[f64], order: usize, budget: f64, cap: f64) -> Mesh {
        let mut knots: Vec<f64> = self
            .knots()
            .into_iter()
            .chain(extra.iter().copied())
            .filter(|&k| k > lo && k < hi)
            .collect();
        knots.push(lo);
        knots.push(hi);
        Mesh::build(&knots, order, |a, b| {
            let rate = (0..=8)
                .map(|k| self.local(a + (b - a) * (k as f64 + 0.5) / 9.0, z).rate())
                .fold(0.0, f64::max);
            (budget / (1.1 * rate)).min(cap)
        })
    }

    /// Samples `u` and `u'` on a mesh, storing `p = hαu' + ibu`.
    pub fn grid_function<U, D>(&self, mesh: Arc<Mesh>, u: U, du: D) -> GridFunction
    where
        U: Fn(f64) -> C64,
        D: Fn(f64) -> C64,
    {
        let b = self.b();
        let (uu, pp) = mesh
            .x
            .iter()
            .map(|&x| {
                let uv = u(x);
                (uv, self.h * self.alpha.eval(x) * du(x) + I * b.eval(x) * uv)
            })
            .unzip();
        GridFunction { mesh, u: uu, p: pp }
    }

    /// `u'` recovered from the quasi-derivative at every node.
    pub fn derivative(&self, g: &GridFunction) -> Vec<C64> {
        let b = self.b();
        g.mesh
            .x
            .iter()
            .zip(g.u.iter().zip(&g.p))
            .map(|(&x, (&u, &p))| (p - I * b.eval(x) * u) / (self.h * self.alpha.eval(x)))
            .collect()
    }
}

/// Energy, absorption, and optional resonance parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub e: f64,
    pub eps: f64,
    pub lambda: Option<C64>,
    /// Select the outgoing exterior solution when `eps = 0`.
    pub outgoing: bool,
}

impl SpectralPoint {
    pub fn new(e: f64, eps: f64) -> Self {
        SpectralPoint {
            e,
            eps,
            lambda: None,
            outgoing: false,
        }
    }

    pub fn outgoing(e: f64) -> Self {
        SpectralPoint {
            e,
            eps: 0.0,
            lambda: None,
            outgoing: true,
        }
    }

    pub fn z(&self) -> C64 {
        C64::new(self.e, self.eps)
    }

    pub fn conj(&self) -> Self {
        SpectralPoint {
            e: self.e,
            eps: -self.eps,
            lambda: self.lambda.map(|l| -l.conj()),
            outgoing: self.outgoing,
        }
    }
}

/// Semiclassical rescaling of an `h = 1` operator at `λ`: `h = 1/|Re λ|`,
/// `b ↦ hb`, `V ↦ h²V`, so that `P(h) - E - iε = h²(H - λ²)`.
pub fn rescale(unit: &CoefficientSpec, lambda: C64) -> Result<(CoefficientSpec, SpectralPoint)> {
    if lambda.re == 0.0 {
        return Err(Error::Invalid("rescaling needs Re λ ≠ 0".into()));
    }
    let h = 1.0 / lambda.re.abs();
    let spec = CoefficientSpec {
        h,
        alpha: unit.alpha.clone(),
        beta: unit.beta.clone(),
        b0: unit.b0.scale(h),
        b1: unit.b1.scale(h),
        v0: unit.v0.scale(h * h),
        v1: unit.v1.scale(h * h),
        r0: unit.r0,
    };
    let e = 1.0 - h * h * lambda.im * lambda.im;
    let eps = 2.0 * h * lambda.re.signum() * lambda.im;
    Ok((
        spec,
        SpectralPoint {
            e,
            eps,
            lambda: Some(lambda),
            outgoing: false,
        },
    ))
}

/// Inverse of [`rescale`] at fixed `h`: the `h = 1` operator `h⁻²P(h)`.
pub fn unscale(spec: &CoefficientSpec) -> CoefficientSpec {
    let h = spec.h;
    CoefficientSpec {
        h: 1.0,
        alpha: spec.alpha.clone(),
        beta: spec.beta.clone(),
        b0: spec.b0.scale(1.0 / h),
        b1: spec.b1.scale(1.0 / h),
        v0: spec.v0.scale(1.0 / (h * h)),
        v1: spec.v1.scale(1.0 / (h * h)),
        r0: spec.r0,
    }
}

/// Continuous value of `u` at an edge (average of the two panel limits).
fn edge_u(g: &GridFunction, k: usize) -> C64 {
    let n = g.mesh.edges.len();
    if k == 0 {
        g.edge_value(0, true).0
    } else if k == n - 1 {
        g.edge_value(k, false).0
    } else {
        0.5 * (g.edge_value(k, false).0 + g.edge_value(k, true).0)
    }
}

fn atom_edge(mesh: &Mesh, x: f64) -> Result<usize> {
    mesh.edge_index(x)
        .ok_or_else(|| Error::Invalid(format!("mesh has no edge at atom x = {x}")))
}

/// `q(u,v) = h²∫αū'v' + ih∫b(ū'v - ūv') + ∫ūvβ⁻¹dV0`, atoms weighted by `1/β^A`.
pub fn quadratic_form(u: &GridFunction, v: &GridFunction, spec: &CoefficientSpec) -> Result<C64> {
    if !u.same_mesh(v) {
        return Err(Error::Invalid("grid functions live on different meshes".into()));
    }
    let h = spec.h;
    let du = spec.derivative(u);
    let dv = spec.derivative(v);
    let b = spec.b();
    let mut s = C64::new(0.0, 0.0);
    for (i, &x) in u.mesh.x.iter().enumerate() {
        let ub = u.u[i].conj();
        let dub = du[i].conj();
        let term = h * h * spec.alpha.eval(x) * dub * dv[i]
            + I * h * b.eval(x) * (dub * v.u[i] - ub * dv[i])
            + ub * v.u[i] * spec.v0.density.eval(x) / spec.beta.eval(x);
        s += term * u.mesh.w[i];
    }
    for &(x, m) in spec.atoms() {
        if x < u.mesh.lo() || x > u.mesh.hi() {
            continue;
        }
        let k = atom_edge(&u.mesh, x)?;
        s += m * edge_u(u, k).conj() * edge_u(v, k) / spec.beta.eval(x);
    }
    Ok(s)
}

/// `∫ ū v β⁻¹ V1`, the long-range part left out of [`quadratic_form`].
pub fn long_range_pairing(u: &GridFunction, v: &GridFunction, spec: &CoefficientSpec) -> C64 {
    u.mesh
        .x
        .iter()
        .enumerate()
        .map(|(i, &x)| u.u[i].conj() * v.u[i] * spec.v1.eval(x) / spec.beta.eval(x) * u.mesh.w[i])
        .sum()
}

/// `∫ ū v β⁻¹ dx`.
pub fn beta_pairing(u: &[C64], v: &[C64], mesh: &Mesh, spec: &CoefficientSpec) -> C64 {
    mesh.x
        .iter()
        .enumerate()
        .map(|(i, &x)| u[i].conj() * v[i] / spec.beta.eval(x) * mesh.w[i])
        .sum()
}

/// Required jump of `h²αu' + ihbu` across the atom at `x` for `u(x) = u_value`.
pub fn jump_rule(spec: &CoefficientSpec, x: f64, u_value: C64) -> Result<C64> {
    let m = spec
        .atoms()
        .iter()
        .find(|a| a.0 == x)
        .map(|a| a.1)
        .ok_or_else(|| Error::Invalid(format!("no V0 atom at x = {x}")))?;
    Ok(u_value * m / spec.beta.eval(x))
}

/// Absolutely continuous part of `P(h)u` at the nodes; fails when the atomic part
/// does not cancel to `tol` (absolute, in the units of `h²αu' + ihbu`).
pub fn apply_operator(u: &GridFunction, spec: &CoefficientSpec, tol: f64) -> Result<Vec<C64>> {
    let h = spec.h;
    let mesh = &u.mesh;
    let du = spec.derivative(u);
    let b = spec.b();
    let v = spec.v_ac();
    let mut out = Vec::with_capacity(mesh.len());
    for p in 0..mesh.panels() {
        let r = mesh.range(p);
        let pt: Vec<C64> = u.p[r.clone()].iter().map(|q| q * h).collect();
        let dpt = mesh.diff(p, &pt);
        for (k, i) in r.enumerate() {
            let x = mesh.x[i];
            let be = spec.beta.eval(x);
            out.push(be * (-dpt[k] - I * h * b.eval(x) * du[i]) + v.eval(x) * u.u[i]);
        }
    }
    let mut worst: Option<(f64, f64)> = None;
    for k in 1..mesh.edges.len() - 1 {
        let x = mesh.edges[k];
        let (ul, pl) = u.edge_value(k, false);
        let (ur, pr) = u.edge_value(k, true);
        let uc = 0.5 * (ul + ur);
        let m = spec.v0.atom_at(x);
        let residue = ((pr - pl) * h - uc * m / spec.beta.eval(x)).norm();
        if worst.is_none_or(|w| residue > w.1) {
            worst = Some((x, residue));
        }
    }
    if let Some((x, r)) = worst {
        if r > tol {
            return Err(Error::NotInDomain { location: x, residue: r });
        }
    }
    Ok(out)
}

/// Constants with `q(u,u) ≥ -c_mass‖u‖² + c_grad‖u'‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormBound {
    pub c_mass: f64,
    pub c_grad: f64,
}

/// Semiboundedness constants. The `V0` term carries `max(1, 1/inf β)²` because the
/// form weights `V0` by `β⁻¹`; for `β ≥ 1` this is the unweighted constant.
pub fn form_lower_bound(spec: &CoefficientSpec) -> FormBound {
    let h = spec.h;
    let ia = spec.inf_alpha();
    let ib = spec.inf_beta();
    let v0 = spec.v0.total_variation() * (1.0f64).max(1.0 / ib);
    let b0 = spec.b0.l2_norm();
    let b1 = spec.b1.sup_abs();
    FormBound {
        c_mass: v0 * v0 / (h * h * ia) + 864.0 * b0.powi(4) / (h * h * ia.powi(3)) + 4.0 * b1 * b1 / ia,
        c_grad: h * h * ia / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;

    fn delta_spec(c: f64) -> CoefficientSpec {
        CoefficientSpec {
            v0: SignedMeasure::dirac(0.0, c),
            ..CoefficientSpec::free(1.0)
        }
    }

    #[test]
    fn form_bound_examples() {
        let fb = form_lower_bound(&delta_spec(1.0));
        assert_eq!((fb.c_mass, fb.c_grad), (1.0, 0.5));
        let fb = form_lower_bound(&CoefficientSpec::free(0.5));
        assert_eq!((fb.c_mass, fb.c_grad), (0.0, 0.125));
        let s = CoefficientSpec {
            b0: PiecewiseBV::indicator(-1.0, 1.0, 1.0),
            ..CoefficientSpec::free(1.0)
        };
        assert!((form_lower_bound(&s).c_mass - 3456.0).abs() < 1e-9);
    }

    #[test]
    fn jump_rule_examples() {
        let s = delta_spec(3.0);
        assert_eq!(jump_rule(&s, 0.0, C64::new(2.0, 0.0)).unwrap(), C64::new(6.0, 0.0));
        assert!(jump_rule(&s, 1.0, C64::new(1.0, 0.0)).is_err());
        let s2 = CoefficientSpec {
            beta: PiecewiseBV::constant(2.0),
            ..delta_spec(1.0)
        };
        assert_eq!(jump_rule(&s2, 0.0, C64::new(1.0, 0.0)).unwrap().re, 0.5);
    }

    #[test]
    fn gaussian_form_value() {
        let s = CoefficientSpec::free(1.0);
        let mesh = Arc::new(Mesh::uniform(-8.0, 8.0, 32, 20));
        let g = s.grid_function(mesh, |x| C64::new((-x * x).exp(), 0.0), |x| C64::new(-2.0 * x * (-x * x).exp(), 0.0));
        let q = quadratic_form(&g, &g, &s).unwrap();
        assert!((q.re - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn free_plane_wave_is_eigenfunction() {
        let s = CoefficientSpec::free(1.0);
        let mesh = Arc::new(Mesh::uniform(-3.0, 3.0, 12, 20));
        let g = s.grid_function(mesh, |x| C64::new(0.0, x).exp(), |x| I * C64::new(0.0, x).exp());
        let pu = apply_operator(&g, &s, 1e-10).unwrap();
        for (a, b) in pu.iter().zip(&g.u) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn rescale_maps_point() {
        let unit = CoefficientSpec {
            v1: PiecewiseBV::bump(-1.0, 1.0, Poly::constant(2.0)),
            ..CoefficientSpec::free(1.0)
        };
        let lam = C64::new(4.0, -0.5);
        let (s, pt) = rescale(&unit, lam).unwrap();
        assert_eq!(s.h, 0.25);
        assert!((pt.z() - s.h * s.h * lam * lam).norm() < 1e-14);
        assert_eq!(unscale(&s).v1.eval(0.0), 2.0);
    }
}
