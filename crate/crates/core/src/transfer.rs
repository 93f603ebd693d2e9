//! Propagation of homogeneous solutions of `(P(h) - z)u = 0` in the state
//! `Y = (u, h²αu' + ihbu)`, with separate log-magnitude bookkeeping.

use crate::error::{Error, Result};
use crate::operator::{CoefficientSpec, LocalSystem};
use crate::quad::GaussRule;
use nalgebra::{SMatrix, SVector};
use num_complex::Complex64 as C64;

pub type V2 = [C64; 2];

/// Direction vector of unit Euclidean norm times `exp(log)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogState {
    pub v: V2,
    pub log: f64,
}

impl LogState {
    pub fn new(v: V2) -> Self {
        let mut s = LogState { v, log: 0.0 };
        s.normalize();
        s
    }

    pub fn normalize(&mut self) {
        let n = (self.v[0].norm_sqr() + self.v[1].norm_sqr()).sqrt();
        if n > 0.0 && n.is_finite() {
            self.v[0] /= n;
            self.v[1] /= n;
            self.log += n.ln();
        }
    }

    /// The state scaled by `exp(-reference)`.
    pub fn relative(&self, reference: f64) -> V2 {
        let f = (self.log - reference).exp();
        [self.v[0] * f, self.v[1] * f]
    }
}

/// `det[l r] = l_u r_p - r_u l_p`.
pub fn wronskian(l: &V2, r: &V2) -> C64 {
    l[0] * r[1] - r[0] * l[1]
}

fn mat_vec(m: &[[C64; 2]; 2], v: &V2) -> V2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn sinhc(w: C64) -> C64 {
    if w.norm() < 1e-4 {
        C64::new(1.0, 0.0) + w * w / 6.0 + w.powi(4) / 120.0
    } else {
        w.sinh() / w
    }
}

/// `exp(t(μI + [[0,a],[c,0]]))`.
pub fn exact_exponential(sys: &LocalSystem, t: f64) -> [[C64; 2]; 2] {
    let q = (sys.a * sys.c).sqrt();
    let w = q * t;
    let e = (sys.mu * t).exp();
    let ch = w.cosh();
    let sh = sinhc(w) * t;
    [[e * ch, e * sh * sys.a], [e * sh * sys.c, e * ch]]
}

/// Which exterior solution is launched from an unbounded tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExteriorRule {
    /// Decaying towards infinity; with `outgoing` set, real `z` above the threshold
    /// takes the limit from `Im z > 0`.
    Decaying { outgoing: bool },
    /// `e^{±iλx/√(αβ)}` on free tails (`h = 1`, `b = V = 0` outside).
    Outgoing(C64),
}

/// Exponent `σ` and direction `(1, (σ-μ)/a)` of the exterior solution.
pub fn exterior_mode(spec: &CoefficientSpec, z: C64, right: bool, rule: ExteriorRule) -> Result<(C64, V2)> {
    let ext = spec.exterior(right);
    let sys = LocalSystem::new(spec.h, ext.alpha, ext.beta, ext.b, ext.v, z);
    let q = (sys.a * sys.c).sqrt();
    let sgn = if right { 1.0 } else { -1.0 };
    let sigma = match rule {
        ExteriorRule::Outgoing(lambda) => {
            if ext.b != 0.0 || ext.v != 0.0 {
                return Err(Error::Invalid("outgoing continuation needs b = V = 0 on both tails".into()));
            }
            sys.mu + sgn * C64::new(0.0, 1.0) * lambda / (ext.alpha * ext.beta).sqrt() / spec.h
        }
        ExteriorRule::Decaying { outgoing } => {
            let decays = |s: C64| sgn * s.re < 0.0;
            let (s1, s2) = (sys.mu + q, sys.mu - q);
            let scale = q.norm().max(1e-300);
            if (s1.re.abs() > 1e-12 * scale) && (decays(s1) != decays(s2)) {
                if decays(s1) {
                    s1
                } else {
                    s2
                }
            } else if outgoing {
                let d = 1e-7 * z.norm().max(1.0);
                let sd = LocalSystem::new(spec.h, ext.alpha, ext.beta, ext.b, ext.v, z + C64::new(0.0, d));
                let qd = (sd.a * sd.c).sqrt();
                let target = if decays(sd.mu + qd) { sd.mu + qd } else { sd.mu - qd };
                if (s1 - target).norm() <= (s2 - target).norm() {
                    s1
                } else {
                    s2
                }
            } else {
                return Err(Error::Invalid(
                    "z lies on the continuous spectrum: eps = 0 requires the outgoing flag".into(),
                ));
            }
        }
    };
    Ok((sigma, [C64::new(1.0, 0.0), (sigma - sys.mu) / sys.a]))
}

/// Piecewise propagation through cells, knots and atoms.
pub struct Transfer<'a> {
    pub spec: &'a CoefficientSpec,
    pub z: C64,
    knots: Vec<f64>,
    /// `(x, m/β^A(x))`.
    atoms: Vec<(f64, f64)>,
    pub tol: f64,
}

impl<'a> Transfer<'a> {
    pub fn new(spec: &'a CoefficientSpec, z: C64) -> Self {
        Transfer {
            spec,
            z,
            knots: spec.knots(),
            atoms: spec.atoms().iter().map(|&(x, m)| (x, m / spec.beta.eval(x))).collect(),
            tol: 1e-12,
        }
    }

    /// Crossing the atom at `x` left to right (`forward`) or right to left.
    pub fn apply_atom(&self, x: f64, st: &mut LogState, forward: bool) {
        if let Some(&(_, m)) = self.atoms.iter().find(|a| a.0 == x) {
            let d = st.v[0] * m;
            if forward {
                st.v[1] += d;
            } else {
                st.v[1] -= d;
            }
            st.normalize();
        }
    }

    /// Propagate across `[x0, x1]` (either order) containing no knot in its interior.
    pub fn step_cell(&self, x0: f64, x1: f64, st: &mut LogState, constant: bool) -> Result<()> {
        if x0 == x1 {
            return Ok(());
        }
        if constant {
            let sys = self.spec.local(0.5 * (x0 + x1), self.z);
            let q = (sys.a * sys.c).sqrt();
            let growth = q.re.abs() + sys.mu.re.abs();
            let chunks = ((growth * (x1 - x0).abs()) / 30.0).ceil().max(1.0) as usize;
            let dt = (x1 - x0) / chunks as f64;
            let m = exact_exponential(&sys, dt);
            for _ in 0..chunks {
                st.v = mat_vec(&m, &st.v);
                st.normalize();
            }
            Ok(())
        } else {
            self.gauss_adaptive(x0, x1, st)
        }
    }

    fn gauss_step(&self, x: f64, dt: f64, y: &V2) -> V2 {
        let rule = GaussRule::get(4);
        let mut m = SMatrix::<C64, 8, 8>::zeros();
        let mut rhs = SVector::<C64, 8>::zeros();
        for i in 0..4 {
            let ci = 0.5 * (rule.nodes[i] + 1.0);
            let s = self.spec.local(x + ci * dt, self.z);
            let ai = [[s.mu, s.a], [s.c, s.mu]];
            for r in 0..2 {
                rhs[2 * i + r] = ai[r][0] * y[0] + ai[r][1] * y[1];
                m[(2 * i + r, 2 * i + r)] += C64::new(1.0, 0.0);
                for j in 0..4 {
                    let aij = 0.5 * rule.integ[i][j] * dt;
                    for col in 0..2 {
                        m[(2 * i + r, 2 * j + col)] -= ai[r][col] * aij;
                    }
                }
            }
        }
        let k = m.lu().solve(&rhs).unwrap_or_else(SVector::zeros);
        let mut out = *y;
        for i in 0..4 {
            let bi = 0.5 * rule.weights[i] * dt;
            out[0] += k[2 * i] * bi;
            out[1] += k[2 * i + 1] * bi;
        }
        out
    }

    fn gauss_adaptive(&self, x0: f64, x1: f64, st: &mut LogState) -> Result<()> {
        let span = x1 - x0;
        let dir = span.signum();
        let rate = self.spec.local(0.5 * (x0 + x1), self.z).rate().max(1e-3);
        let mut dt = span.abs().min(0.5 / rate);
        let mut x = x0;
        while (x1 - x) * dir > 0.0 {
            if (x1 - x) * dir < dt * (1.0 + 1e-12) {
                dt = (x1 - x).abs();
            }
            let full = self.gauss_step(x, dir * dt, &st.v);
            let half = self.gauss_step(x, dir * dt / 2.0, &st.v);
            let two = self.gauss_step(x + dir * dt / 2.0, dir * dt / 2.0, &half);
            let err = ((full[0] - two[0]).norm() + (full[1] - two[1]).norm()) / 255.0;
            let size = two[0].norm() + two[1].norm();
            if err <= self.tol * dt * size || dt < 1e-14 * span.abs().max(1.0) {
                if dt < 1e-14 * span.abs().max(1.0) && err > self.tol * size {
                    return Err(Error::StepFailure { x });
                }
                x = if (x1 - x) * dir <= dt { x1 } else { x + dir * dt };
                st.v = two;
                st.normalize();
                let fac = if err > 0.0 { 0.9 * (self.tol * dt * size / err).powf(1.0 / 9.0) } else { 2.0 };
                dt *= fac.clamp(0.2, 2.0);
            } else {
                let fac = 0.9 * (self.tol * dt * size / err).powf(1.0 / 9.0);
                dt *= fac.clamp(0.1, 0.5);
            }
        }
        Ok(())
    }

    /// State at `x1` from the state at `x0`, both as right limits: atoms in
    /// `(x0, x1]` are applied going right and atoms in `(x1, x0]` undone going left.
    pub fn propagate(&self, x0: f64, x1: f64, mut st: LogState) -> Result<LogState> {
        if x0 == x1 {
            return Ok(st);
        }
        let forward = x1 > x0;
        let (lo, hi) = if forward { (x0, x1) } else { (x1, x0) };
        let mut pts: Vec<f64> = self.knots.iter().copied().filter(|&k| k > lo && k < hi).collect();
        if !forward {
            pts.reverse();
            self.apply_atom(x0, &mut st, false);
        }
        pts.push(x1);
        let mut x = x0;
        for &y in &pts {
            let constant = self.spec.constant_on(x.min(y), x.max(y));
            self.step_cell(x, y, &mut st, constant)?;
            if y != x1 {
                self.apply_atom(y, &mut st, forward);
            }
            x = y;
        }
        if forward {
            self.apply_atom(x1, &mut st, true);
        }
        Ok(st)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bv::{PiecewiseBV, SignedMeasure};
    use crate::poly::Poly;

    #[test]
    fn exact_exponential_free_wave() {
        let s = CoefficientSpec::free(1.0);
        let t = Transfer::new(&s, C64::new(4.0, 0.0));
        let st = t.propagate(0.0, 1.5, LogState::new([C64::new(1.0, 0.0), C64::new(0.0, 2.0)])).unwrap();
        let v = st.relative(0.0);
        let want = C64::new(0.0, 3.0).exp();
        assert!((v[0] - want).norm() < 1e-13);
    }

    #[test]
    fn gauss_matches_exact_on_constant_cell() {
        let s = CoefficientSpec {
            v1: PiecewiseBV::constant(0.3),
            b1: PiecewiseBV::constant(0.7),
            ..CoefficientSpec::free(0.5)
        };
        let t = Transfer::new(&s, C64::new(1.0, 0.2));
        let y0 = LogState::new([C64::new(1.0, 0.0), C64::new(0.3, -0.2)]);
        let mut a = y0;
        let mut b = y0;
        t.step_cell(0.0, 2.0, &mut a, true).unwrap();
        t.step_cell(0.0, 2.0, &mut b, false).unwrap();
        let (va, vb) = (a.relative(0.0), b.relative(0.0));
        assert!((va[0] - vb[0]).norm() + (va[1] - vb[1]).norm() < 1e-10 * va[0].norm());
    }

    #[test]
    fn gauss_handles_linear_potential() {
        // u'' = x u has the Airy functions as solutions; compare with a fine RK4 reference.
        let s = CoefficientSpec {
            v1: PiecewiseBV::new(vec![0.0, 1.0], vec![Poly::zero(), Poly::x(), Poly::constant(1.0)]).unwrap(),
            ..CoefficientSpec::free(1.0)
        };
        let t = Transfer::new(&s, C64::new(0.0, 0.0));
        let st = t.propagate(0.0, 1.0, LogState::new([C64::new(1.0, 0.0), C64::new(0.0, 0.0)])).unwrap();
        let (mut u, mut du) = (1.0f64, 0.0f64);
        let n = 20000;
        let hh = 1.0 / n as f64;
        for k in 0..n {
            let x = k as f64 * hh;
            let f = |x: f64, u: f64, d: f64| (d, x * u);
            let k1 = f(x, u, du);
            let k2 = f(x + hh / 2.0, u + hh / 2.0 * k1.0, du + hh / 2.0 * k1.1);
            let k3 = f(x + hh / 2.0, u + hh / 2.0 * k2.0, du + hh / 2.0 * k2.1);
            let k4 = f(x + hh, u + hh * k3.0, du + hh * k3.1);
            u += hh / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            du += hh / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        let v = st.relative(0.0);
        assert!((v[0].re - u).abs() < 1e-11 && (v[1].re - du).abs() < 1e-11);
    }

    #[test]
    fn atoms_follow_half_open_convention() {
        let s = CoefficientSpec {
            v0: SignedMeasure::dirac(1.0, 2.0),
            ..CoefficientSpec::free(1.0)
        };
        let t = Transfer::new(&s, C64::new(0.0, 0.0));
        let y = LogState::new([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let at = t.propagate(0.0, 1.0, y).unwrap().relative(0.0);
        assert!((at[1].re - 2.0).abs() < 1e-14);
        let back = t.propagate(1.0, 0.0, LogState { v: at, log: 0.0 }).unwrap().relative(0.0);
        assert!((back[0].re - 1.0).abs() < 1e-14 && back[1].norm() < 1e-14);
        let stay = t.propagate(2.0, 1.0, LogState::new([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        let w = stay.unwrap().relative(0.0);
        assert!(w[1].norm() < 1e-14);
    }

    #[test]
    fn exterior_branch_choice() {
        let s = CoefficientSpec::free(1.0);
        let (sr, _) = exterior_mode(&s, C64::new(1.0, 0.1), true, ExteriorRule::Decaying { outgoing: false }).unwrap();
        assert!(sr.re < 0.0 && sr.im > 0.0);
        let (so, _) = exterior_mode(&s, C64::new(1.0, 0.0), true, ExteriorRule::Decaying { outgoing: true }).unwrap();
        assert!((so - C64::new(0.0, 1.0)).norm() < 1e-14);
        let (sl, _) = exterior_mode(&s, C64::new(1.0, 0.0), false, ExteriorRule::Decaying { outgoing: true }).unwrap();
        assert!((sl - C64::new(0.0, -1.0)).norm() < 1e-14);
        assert!(exterior_mode(&s, C64::new(1.0, 0.0), true, ExteriorRule::Decaying { outgoing: false }).is_err());
    }
}
