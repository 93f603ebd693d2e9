//! Solutions of `(P(h) - E - iε)v = f` by variation of parameters between the
//! two exterior solutions, weighted norms, and operator-norm estimates.

use crate::error::{Error, Result};
use crate::linalg::{fit_line, lanczos_norm, LineFit, NormEstimate};
use crate::mesh::{GridFunction, Mesh};
use crate::operator::{CoefficientSpec, SpectralPoint};
use crate::transfer::{exterior_mode, wronskian, ExteriorRule, LogState, Transfer, V2};
use crate::weights::{japanese, tail_integral, Weight};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Gauss order used on every resolvent panel.
pub const PANEL_ORDER: usize = 20;
/// Largest `rate · length` on a panel.
pub const PANEL_BUDGET: f64 = 3.0;
pub const PANEL_CAP: f64 = 0.5;

/// Mesh on `[lo, hi]` suited to the solution at `z`.
pub fn resolvent_mesh(spec: &CoefficientSpec, z: C64, lo: f64, hi: f64, extra: &[f64]) -> Arc<Mesh> {
    Arc::new(spec.mesh(lo, hi, z, extra, PANEL_ORDER, PANEL_BUDGET, PANEL_CAP))
}

/// Default computational box: the coefficient core padded by one unit.
pub fn default_box(spec: &CoefficientSpec, extra: &[f64]) -> (f64, f64) {
    let (a, b) = spec.core_interval();
    let lo = extra.iter().copied().fold(a, f64::min) - 1.0;
    let hi = extra.iter().copied().fold(b, f64::max) + 1.0;
    (lo, hi)
}

/// Left/right fundamental solutions sampled on a mesh with per-panel log scales.
pub struct Green {
    pub spec: CoefficientSpec,
    pub z: C64,
    pub mesh: Arc<Mesh>,
    phi_l: Vec<V2>,
    phi_r: Vec<V2>,
    /// `log|Φ_L(a_p)|`, plus `log|Φ_L(hi)|` last.
    ell_l: Vec<f64>,
    /// `log|Φ_R(lo)|` first, then `log|Φ_R(b_p)|`.
    ell_r: Vec<f64>,
    omega: f64,
    a_coef: Vec<C64>,
    c_coef: Vec<C64>,
    pub sigma_l: C64,
    pub sigma_r: C64,
    pub mode_l: V2,
    pub mode_r: V2,
    /// Inverse of the best normalized Wronskian `|W|/(|Φ_L||Φ_R|)`.
    pub condition: f64,
    /// Largest relative drift of `|W|` across the mesh.
    pub wronskian_drift: f64,
}

/// Output of the discrete solution operator.
#[derive(Clone, Debug)]
pub struct Applied {
    /// `(u, h²αu' + ihbu)` at the nodes.
    pub y: Vec<V2>,
    /// `Y(x) = tail_l · mode_l · e^{σ_L(x - lo)}` for `x ≤ lo`.
    pub tail_l: C64,
    /// `Y(x) = tail_r · mode_r · e^{σ_R(x - hi)}` for `x ≥ hi`.
    pub tail_r: C64,
}

fn unit(v: V2) -> V2 {
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / n, v[1] / n]
}

impl Green {
    pub fn new(spec: &CoefficientSpec, z: C64, mesh: Arc<Mesh>, rule: ExteriorRule) -> Result<Green> {
        let (lo, hi) = (mesh.lo(), mesh.hi());
        let (ka, kb) = spec.core_interval();
        if !spec.knots().is_empty() && (lo >= ka || hi <= kb) {
            return Err(Error::Invalid(format!(
                "mesh [{lo}, {hi}] must strictly contain the coefficient core [{ka}, {kb}]"
            )));
        }
        for k in spec.knots() {
            if mesh.edge_index(k).is_none() {
                return Err(Error::Invalid(format!("mesh has no edge at coefficient knot {k}")));
            }
        }
        let (sigma_l, mode_l) = exterior_mode(spec, z, false, rule)?;
        let (sigma_r, mode_r) = exterior_mode(spec, z, true, rule)?;
        let (mode_l, mode_r) = (unit(mode_l), unit(mode_r));
        let tr = Transfer::new(spec, z);
        let np = mesh.panels();
        let n = mesh.order;
        let mut phi_l = vec![[ZERO; 2]; mesh.len()];
        let mut phi_r = vec![[ZERO; 2]; mesh.len()];
        let mut ell_l = vec![0.0; np + 1];
        let mut ell_r = vec![0.0; np + 1];
        let constant: Vec<bool> = (0..np).map(|p| spec.constant_on(mesh.edges[p], mesh.edges[p + 1])).collect();

        let mut st = LogState { v: mode_l, log: 0.0 };
        for p in 0..np {
            ell_l[p] = st.log;
            let mut x = mesh.edges[p];
            for i in mesh.range(p) {
                tr.step_cell(x, mesh.x[i], &mut st, constant[p])?;
                phi_l[i] = st.relative(ell_l[p]);
                x = mesh.x[i];
            }
            tr.step_cell(x, mesh.edges[p + 1], &mut st, constant[p])?;
            tr.apply_atom(mesh.edges[p + 1], &mut st, true);
        }
        ell_l[np] = st.log;

        let mut st = LogState { v: mode_r, log: 0.0 };
        for p in (0..np).rev() {
            ell_r[p + 1] = st.log;
            tr.apply_atom(mesh.edges[p + 1], &mut st, false);
            let mut x = mesh.edges[p + 1];
            for i in mesh.range(p).rev() {
                tr.step_cell(x, mesh.x[i], &mut st, constant[p])?;
                phi_r[i] = st.relative(ell_r[p + 1]);
                x = mesh.x[i];
            }
            tr.step_cell(x, mesh.edges[p], &mut st, constant[p])?;
        }
        ell_r[0] = st.log;

        // Wronskian: reference at the best-conditioned node, phase from ∫ b/(hα).
        let rule_g = mesh.rule();
        let mut theta = vec![0.0; mesh.len()];
        let mut theta_a = 0.0;
        let b = spec.b();
        for p in 0..np {
            let r = mesh.range(p);
            let half = 0.5 * mesh.panel_len(p);
            let g: Vec<f64> = r.clone().map(|i| b.eval(mesh.x[i]) / (spec.h * spec.alpha.eval(mesh.x[i]))).collect();
            for (k, i) in r.clone().enumerate() {
                theta[i] = theta_a + (0..n).map(|j| rule_g.integ[k][j] * half * g[j]).sum::<f64>();
            }
            theta_a += (0..n).map(|j| mesh.w[r.start + j] * g[j]).sum::<f64>();
        }
        let mut best = (0usize, -1.0f64);
        let mut wn = vec![ZERO; mesh.len()];
        for i in 0..mesh.len() {
            wn[i] = wronskian(&phi_l[i], &phi_r[i]);
            let nl = (phi_l[i][0].norm_sqr() + phi_l[i][1].norm_sqr()).sqrt();
            let nr = (phi_r[i][0].norm_sqr() + phi_r[i][1].norm_sqr()).sqrt();
            let q = wn[i].norm() / (nl * nr);
            if q > best.1 {
                best = (i, q);
            }
        }
        let (js, quality) = best;
        if !(quality > 1e-14) {
            return Err(Error::SingularMatching {
                z: format!("{z}"),
                condition: 1.0 / quality.max(1e-300),
            });
        }
        let ps = js / n;
        let omega = wn[js].norm().ln() + ell_l[ps] + ell_r[ps + 1];
        let arg0 = wn[js] / wn[js].norm();
        let mut drift = 0.0f64;
        let mut a_coef = vec![ZERO; mesh.len()];
        let mut c_coef = vec![ZERO; mesh.len()];
        for p in 0..np {
            let e = (ell_l[p] + ell_r[p + 1] - omega).exp();
            for i in mesh.range(p) {
                let ph = arg0 * (C64::new(0.0, -2.0 * (theta[i] - theta[js]))).exp();
                let scaled = wn[i] * e;
                let nl = (phi_l[i][0].norm_sqr() + phi_l[i][1].norm_sqr()).sqrt();
                let nr = (phi_r[i][0].norm_sqr() + phi_r[i][1].norm_sqr()).sqrt();
                // drift of W relative to the size of the products forming it
                drift = drift.max((scaled - ph).norm() / (1.0 + nl * nr * e));
                let be = spec.beta.eval(mesh.x[i]);
                a_coef[i] = phi_l[i][0] / (be * ph);
                c_coef[i] = phi_r[i][0] / (be * ph);
            }
        }
        Ok(Green {
            spec: spec.clone(),
            z,
            mesh,
            phi_l,
            phi_r,
            ell_l,
            ell_r,
            omega,
            a_coef,
            c_coef,
            sigma_l,
            sigma_r,
            mode_l,
            mode_r,
            condition: 1.0 / quality,
            wronskian_drift: drift,
        })
    }

    /// `ln|W|`, where `W = Φ_L,u Φ_R,p - Φ_R,u Φ_L,p` with both exterior solutions of
    /// unit size at the mesh ends.
    pub fn log_wronskian(&self) -> f64 {
        self.omega
    }

    fn e_panel(&self, p: usize) -> f64 {
        (self.ell_l[p] + self.ell_r[p + 1] - self.omega).exp()
    }

    fn s_half(&self, p: usize) -> f64 {
        0.5 * self.mesh.panel_len(p)
    }

    /// Applies the discrete solution operator to right-hand side samples `g`.
    pub fn apply(&self, g: &[C64]) -> Applied {
        let mesh = &self.mesh;
        let np = mesh.panels();
        let n = mesh.order;
        let rule = mesh.rule();
        let mut ag = vec![ZERO; mesh.len()];
        let mut cg = vec![ZERO; mesh.len()];
        let mut a_sum = vec![ZERO; np];
        let mut b_sum = vec![ZERO; np];
        for p in 0..np {
            for i in mesh.range(p) {
                ag[i] = self.a_coef[i] * g[i];
                cg[i] = self.c_coef[i] * g[i];
                a_sum[p] += mesh.w[i] * ag[i];
                b_sum[p] += mesh.w[i] * cg[i];
            }
        }
        let mut r = vec![ZERO; np + 1];
        for p in 0..np {
            r[p + 1] = (self.ell_l[p] - self.ell_l[p + 1]).exp() * (r[p] + a_sum[p]);
        }
        // q[p] = Σ_{q>p} e^{ℓR_q - ℓR_p} B_q, with ℓR_p = ell_r[p+1]
        let mut q = vec![ZERO; np];
        for p in (1..np).rev() {
            q[p - 1] = (self.ell_r[p + 1] - self.ell_r[p]).exp() * (q[p] + b_sum[p]);
        }
        let q_lo = (self.ell_r[1] - self.ell_r[0]).exp() * (q[0] + b_sum[0]);
        let mut y = vec![[ZERO; 2]; mesh.len()];
        for p in 0..np {
            let e = self.e_panel(p);
            let half = self.s_half(p);
            let base = p * n;
            for k in 0..n {
                let i = base + k;
                let mut left_part = r[p];
                let mut right_part = q[p];
                for j in 0..n {
                    let s = rule.integ[k][j] * half;
                    left_part += s * ag[base + j];
                    right_part += (mesh.w[base + j] - s) * cg[base + j];
                }
                for c in 0..2 {
                    y[i][c] = -e * (self.phi_l[i][c] * right_part + self.phi_r[i][c] * left_part);
                }
            }
        }
        Applied {
            y,
            tail_r: -(self.ell_l[np] - self.omega).exp() * r[np],
            tail_l: -(self.ell_r[0] - self.omega).exp() * q_lo,
        }
    }

    /// Adjoint of [`Green::apply`] for the Euclidean pairing: returns `T*y` where the
    /// output functional is `Σ conj(yu)u + conj(yp)p + conj(yl)tail_l + conj(yr)tail_r`.
    pub fn adjoint(&self, yu: &[C64], yp: &[C64], yl: C64, yr: C64) -> Vec<C64> {
        let mesh = &self.mesh;
        let np = mesh.panels();
        let n = mesh.order;
        let rule = mesh.rule();
        let mut s_r = vec![ZERO; mesh.len()];
        let mut s_l = vec![ZERO; mesh.len()];
        let mut sig_r = vec![ZERO; np + 1];
        let mut sig_l = vec![ZERO; np];
        for p in 0..np {
            let e = self.e_panel(p);
            for i in mesh.range(p) {
                s_r[i] = yu[i].conj() * self.phi_r[i][0] + yp[i].conj() * self.phi_r[i][1];
                s_l[i] = yu[i].conj() * self.phi_l[i][0] + yp[i].conj() * self.phi_l[i][1];
                sig_r[p] -= e * s_r[i];
                sig_l[p] -= e * s_l[i];
            }
        }
        sig_r[np] = -yr.conj() * (self.ell_l[np] - self.omega).exp();
        let sig_lo = -yl.conj() * (self.ell_r[0] - self.omega).exp();
        let mut zz = vec![ZERO; np];
        zz[np - 1] = (self.ell_l[np - 1] - self.ell_l[np]).exp() * sig_r[np];
        for qi in (0..np - 1).rev() {
            zz[qi] = (self.ell_l[qi] - self.ell_l[qi + 1]).exp() * (sig_r[qi + 1] + zz[qi + 1]);
        }
        let mut yy = vec![ZERO; np];
        yy[0] = (self.ell_r[1] - self.ell_r[0]).exp() * sig_lo;
        for qi in 0..np - 1 {
            yy[qi + 1] = (self.ell_r[qi + 2] - self.ell_r[qi + 1]).exp() * (yy[qi] + sig_l[qi]);
        }
        let mut out = vec![ZERO; mesh.len()];
        for p in 0..np {
            let e = self.e_panel(p);
            let half = self.s_half(p);
            let base = p * n;
            for jj in 0..n {
                let j = base + jj;
                let mut ka = mesh.w[j] * zz[p];
                let mut kc = mesh.w[j] * yy[p];
                for k in 0..n {
                    let s = rule.integ[k][jj] * half;
                    ka -= e * s_r[base + k] * s;
                    kc -= e * s_l[base + k] * (mesh.w[j] - s);
                }
                out[j] = (self.a_coef[j] * ka + self.c_coef[j] * kc).conj();
            }
        }
        out
    }

    /// `∫ ω(x)²|u(x)|² dx` over the right (`right = true`) or left tail per unit
    /// `|tail coefficient|²`, for the `u` component and optionally the derivative
    /// of `ωu` as well.
    pub fn tail_factor(&self, right: bool, w: &Weight, with_derivative: bool) -> f64 {
        let (x0, sigma, mode, dir) = if right {
            (self.mesh.hi(), self.sigma_r, self.mode_r, 1.0)
        } else {
            (self.mesh.lo(), self.sigma_l, self.mode_l, -1.0)
        };
        if let Some((a, b)) = w.support() {
            if (right && b <= x0) || (!right && a >= x0) {
                return 0.0;
            }
        }
        let k = 2.0 * sigma.re * dir;
        if k > 1e-14 {
            return f64::INFINITY;
        }
        let u2 = mode[0].norm_sqr();
        tail_integral(k.min(0.0), |t| {
            let x = x0 + dir * t;
            let om = w.eval(x);
            let mut v = om * om * u2;
            if with_derivative {
                v += (w.deriv(x) + om * sigma).norm_sqr() * u2;
            }
            v
        })
    }
}

/// A solution `v` with its quasi-derivative and exact exterior continuation.
#[derive(Clone, Debug)]
pub struct SolutionField {
    /// `u = v`, `p = hαv' + ibv`.
    pub grid: GridFunction,
    pub point: SpectralPoint,
    pub h: f64,
    pub tail_l: C64,
    pub tail_r: C64,
    pub sigma_l: C64,
    pub sigma_r: C64,
    pub mode_l: V2,
    pub mode_r: V2,
    /// Relative sup residual of the first-order system on the mesh.
    pub residual: f64,
    /// `√(E + iε)/h` on the principal branch.
    pub kappa: C64,
    pub condition: f64,
}

impl SolutionField {
    /// `v` at any point, including the exterior continuation.
    pub fn value(&self, x: f64) -> C64 {
        let m = &self.grid.mesh;
        if x >= m.hi() {
            return self.tail_r * self.mode_r[0] * (self.sigma_r * (x - m.hi())).exp();
        }
        if x <= m.lo() {
            return self.tail_l * self.mode_l[0] * (self.sigma_l * (x - m.lo())).exp();
        }
        let p = m.edges.partition_point(|&e| e <= x).saturating_sub(1).min(m.panels() - 1);
        m.interp(p, &self.grid.u[m.range(p)], x)
    }
}

/// Rule used for a spectral point: decaying exterior solutions, with the outgoing
/// limit when `eps = 0` and the flag is set.
pub fn rule_for(point: &SpectralPoint) -> ExteriorRule {
    ExteriorRule::Decaying { outgoing: point.outgoing }
}

fn check_point(point: &SpectralPoint) -> Result<()> {
    if point.eps == 0.0 && !point.outgoing {
        return Err(Error::Invalid("eps = 0 requires the outgoing flag".into()));
    }
    if point.eps == 0.0 && point.e <= 0.0 {
        return Err(Error::Invalid("outgoing solves need E > 0".into()));
    }
    Ok(())
}

fn residual_of(spec: &CoefficientSpec, z: C64, mesh: &Mesh, y: &[V2], f: &[C64]) -> f64 {
    let mut worst_u = 0.0f64;
    let mut worst_p = 0.0f64;
    let mut size_u = 0.0f64;
    let mut size_p = 0.0f64;
    for p in 0..mesh.panels() {
        let r = mesh.range(p);
        let u: Vec<C64> = r.clone().map(|i| y[i][0]).collect();
        let pt: Vec<C64> = r.clone().map(|i| y[i][1]).collect();
        let du = mesh.diff(p, &u);
        let dp = mesh.diff(p, &pt);
        for (k, i) in r.enumerate() {
            let s = spec.local(mesh.x[i], z);
            let ru = s.mu * u[k] + s.a * pt[k];
            let rp = s.c * u[k] + s.mu * pt[k] - f[i] / s.beta;
            worst_u = worst_u.max((du[k] - ru).norm());
            worst_p = worst_p.max((dp[k] - rp).norm());
            size_u = size_u.max(ru.norm()).max(u[k].norm());
            size_p = size_p.max(rp.norm()).max((f[i] / s.beta).norm());
        }
    }
    (worst_u / size_u.max(1e-300)).max(worst_p / size_p.max(1e-300))
}

/// Solves `(P(h) - E - iε)v = f` for `f` sampled on a mesh that contains the
/// coefficient core and the breakpoints of `f`; `f` vanishes outside the mesh.
pub fn solve(spec: &CoefficientSpec, point: &SpectralPoint, f: &GridFunction) -> Result<SolutionField> {
    check_point(point)?;
    let green = Green::new(spec, point.z(), f.mesh.clone(), rule_for(point))?;
    Ok(field_from(&green, point, &f.u))
}

/// Solution field from an assembled [`Green`] and right-hand side samples.
pub fn field_from(green: &Green, point: &SpectralPoint, f: &[C64]) -> SolutionField {
    let out = green.apply(f);
    let mesh = green.mesh.clone();
    let h = green.spec.h;
    let residual = residual_of(&green.spec, green.z, &mesh, &out.y, f);
    let grid = GridFunction {
        u: out.y.iter().map(|y| y[0]).collect(),
        p: out.y.iter().map(|y| y[1] / h).collect(),
        mesh,
    };
    SolutionField {
        grid,
        point: *point,
        h,
        tail_l: out.tail_l,
        tail_r: out.tail_r,
        sigma_l: green.sigma_l,
        sigma_r: green.sigma_r,
        mode_l: green.mode_l,
        mode_r: green.mode_r,
        residual,
        kappa: point.z().sqrt() / h,
        condition: green.condition,
    }
}

impl SolutionField {
    fn tail_energy_for(&self, right: bool, s: f64, r: Option<f64>) -> f64 {
        let (x0, sigma, mode, dir) = if right {
            (self.grid.mesh.hi(), self.sigma_r, self.mode_r, 1.0)
        } else {
            (self.grid.mesh.lo(), self.sigma_l, self.mode_l, -1.0)
        };
        let k = 2.0 * sigma.re * dir;
        if k > 1e-14 {
            return f64::INFINITY;
        }
        let m2 = mode[0].norm_sqr() + mode[1].norm_sqr() / (self.h * self.h);
        tail_integral(k.min(0.0), |t| {
            let x = x0 + dir * t;
            if r.is_some_and(|r| x.abs() <= r) {
                0.0
            } else {
                japanese(x).powf(-2.0 * s) * m2
            }
        })
    }
}

/// `(∫⟨x⟩^{-2s}(|v|² + |p|²))^{1/2}` with `p = hαv' + ibv`, over `|x| > r` when a
/// cutoff is given (`±r` should be mesh edges for full accuracy).
pub fn weighted_norm(field: &SolutionField, s: f64, cutoff: Option<f64>) -> f64 {
    let g = &field.grid;
    let mut sum = 0.0;
    for (i, &x) in g.mesh.x.iter().enumerate() {
        if cutoff.is_some_and(|r| x.abs() <= r) {
            continue;
        }
        sum += g.mesh.w[i] * japanese(x).powf(-2.0 * s) * (g.u[i].norm_sqr() + g.p[i].norm_sqr());
    }
    sum += field.tail_l.norm_sqr() * field.tail_energy_for(false, s, cutoff);
    sum += field.tail_r.norm_sqr() * field.tail_energy_for(true, s, cutoff);
    sum.sqrt()
}

/// Input and output multipliers, with optional `H¹` norms on either side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub input: Weight,
    pub output: Weight,
    pub input_h1: bool,
    pub output_h1: bool,
}

impl WeightPair {
    pub fn l2(input: Weight, output: Weight) -> Self {
        WeightPair {
            input,
            output,
            input_h1: false,
            output_h1: false,
        }
    }

    pub fn knots(&self) -> Vec<f64> {
        let mut k = self.input.knots();
        k.extend(self.output.knots());
        k
    }
}

/// Discrete isometric form `K̂ = D_o T D_i` of the weighted solution operator.
pub struct WeightedOperator {
    pub green: Green,
    din: Vec<f64>,
    dout: Vec<f64>,
    /// Coefficients of `(ωu)'` in terms of `(u, h²αu' + ihbu)`.
    d1: Vec<C64>,
    d2: Vec<C64>,
    tail_l: f64,
    tail_r: f64,
    pub weights: WeightPair,
}

impl WeightedOperator {
    pub fn new(green: Green, weights: WeightPair) -> Self {
        let mesh = green.mesh.clone();
        let spec = &green.spec;
        let h = spec.h;
        let b = spec.b();
        let din = mesh
            .x
            .iter()
            .zip(&mesh.w)
            .map(|(&x, &w)| weights.input.eval(x) / w.sqrt())
            .collect();
        let dout = mesh
            .x
            .iter()
            .zip(&mesh.w)
            .map(|(&x, &w)| weights.output.eval(x) * w.sqrt())
            .collect();
        let mut d1 = vec![];
        let mut d2 = vec![];
        if weights.output_h1 {
            for (&x, &w) in mesh.x.iter().zip(&mesh.w) {
                let om = weights.output.eval(x);
                let al = spec.alpha.eval(x);
                d1.push(w.sqrt() * (weights.output.deriv(x) - om * I * h * b.eval(x) / (h * h * al)));
                d2.push(C64::new(w.sqrt() * om / (h * h * al), 0.0));
            }
        }
        let tail_l = green.tail_factor(false, &weights.output, weights.output_h1).sqrt();
        let tail_r = green.tail_factor(true, &weights.output, weights.output_h1).sqrt();
        WeightedOperator {
            green,
            din,
            dout,
            d1,
            d2,
            tail_l,
            tail_r,
            weights,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.din.len()
    }

    pub fn output_dim(&self) -> usize {
        self.dout.len() * if self.weights.output_h1 { 2 } else { 1 } + 2
    }

    pub fn forward(&self, g: &[C64]) -> Vec<C64> {
        let raw: Vec<C64> = g.iter().zip(&self.din).map(|(v, d)| v * d).collect();
        let a = self.green.apply(&raw);
        let n = self.dout.len();
        let mut out: Vec<C64> = (0..n).map(|i| a.y[i][0] * self.dout[i]).collect();
        if self.weights.output_h1 {
            out.extend((0..n).map(|i| self.d1[i] * a.y[i][0] + self.d2[i] * a.y[i][1]));
        }
        out.push(a.tail_l * self.tail_l);
        out.push(a.tail_r * self.tail_r);
        out
    }

    pub fn backward(&self, o: &[C64]) -> Vec<C64> {
        let n = self.dout.len();
        let mut yu: Vec<C64> = (0..n).map(|i| o[i] * self.dout[i]).collect();
        let mut yp = vec![ZERO; n];
        if self.weights.output_h1 {
            for i in 0..n {
                yu[i] += self.d1[i].conj() * o[n + i];
                yp[i] += self.d2[i].conj() * o[n + i];
            }
        }
        let m = o.len();
        let t = self.green.adjoint(&yu, &yp, o[m - 2] * self.tail_l, o[m - 1] * self.tail_r);
        t.iter().zip(&self.din).map(|(v, d)| v * d).collect()
    }

    /// `Ĵ = W^{1/2} J W^{1/2}` for the kernel `e^{-|x-y|}/2` of `(1 - ∂²)^{-1}`.
    fn smoothing(&self, v: &[C64]) -> Vec<C64> {
        let m = &self.green.mesh;
        let n = v.len();
        let sw: Vec<f64> = m.w.iter().map(|w| w.sqrt()).collect();
        let u: Vec<C64> = v.iter().zip(&sw).map(|(a, b)| a * b).collect();
        let mut fwd = vec![ZERO; n];
        let mut bwd = vec![ZERO; n];
        for i in 0..n {
            fwd[i] = u[i] + if i > 0 { fwd[i - 1] * (m.x[i - 1] - m.x[i]).exp() } else { ZERO };
        }
        for i in (0..n).rev() {
            bwd[i] = u[i] + if i + 1 < n { bwd[i + 1] * (m.x[i] - m.x[i + 1]).exp() } else { ZERO };
        }
        (0..n).map(|i| 0.5 * sw[i] * (fwd[i] + bwd[i] - u[i])).collect()
    }

    /// Norm of the weighted operator in the chosen `H^k` spaces.
    pub fn norm(&self, iters: usize, seed: u64, gap: f64) -> NormEstimate {
        if self.weights.input.is_zero() || self.weights.output.is_zero() {
            return NormEstimate::zero();
        }
        if self.weights.input_h1 {
            lanczos_norm(
                |o| {
                    let g = self.backward(o);
                    self.forward(&self.smoothing(&g))
                },
                self.output_dim(),
                iters,
                seed,
                gap,
            )
        } else {
            lanczos_norm(|g| self.backward(&self.forward(g)), self.input_dim(), iters, seed, gap)
        }
    }
}

/// Operator norm of `ω_o (P(h) - z)^{-1} ω_i` with the input truncated to
/// `[-truncation, truncation]`; the output includes the exact exterior tails.
pub fn opnorm_estimate(
    spec: &CoefficientSpec,
    point: &SpectralPoint,
    weights: &WeightPair,
    truncation: f64,
    probes: usize,
    iters: usize,
    seed: u64,
) -> Result<NormEstimate> {
    if probes == 0 {
        return Err(Error::Invalid("at least one probe is required".into()));
    }
    if weights.input.is_zero() || weights.output.is_zero() {
        return Ok(NormEstimate::zero());
    }
    check_point(point)?;
    let (a, b) = default_box(spec, &weights.knots());
    let lo = a.min(-truncation);
    let hi = b.max(truncation);
    let mesh = resolvent_mesh(spec, point.z(), lo, hi, &weights.knots());
    let green = Green::new(spec, point.z(), mesh, rule_for(point))?;
    let op = WeightedOperator::new(green, weights.clone());
    let mut best: Option<NormEstimate> = None;
    for k in 0..probes {
        let est = op.norm(iters, seed.wrapping_add(k as u64), 1e-3);
        best = Some(match best {
            None => est,
            Some(b) => {
                let lower = b.lower.max(est.lower);
                let upper = b.upper.min(est.upper).max(lower);
                let mut history = b.history;
                let last = *history.last().unwrap_or(&0.0);
                history.extend(est.history.iter().map(|v| v.max(last)));
                NormEstimate {
                    lower,
                    upper,
                    converged: (upper - lower) / upper.max(1e-300) <= 0.05,
                    history,
                }
            }
        });
    }
    let est = best.unwrap();
    if !est.converged {
        return Err(Error::NoConvergence(format!(
            "norm bracket [{:.6e}, {:.6e}] after {iters} iterations",
            est.lower, est.upper
        )));
    }
    Ok(est)
}

/// One `h` of a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormRow {
    pub h: f64,
    pub energy: f64,
    pub eps: f64,
    pub exterior: Option<NormEstimate>,
    pub full: Option<NormEstimate>,
    /// `h · ‖1_{>R}⟨x⟩^{-s} R ⟨x⟩^{-s}1_{>R}‖`
    pub exterior_scaled: f64,
    /// `h · ln‖⟨x⟩^{-s} R ⟨x⟩^{-s}‖`
    pub log_full_scaled: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormReport {
    pub s: f64,
    pub radius: f64,
    pub truncation: f64,
    pub rows: Vec<NormRow>,
    /// `ln(exterior norm)` against `ln(1/h)`.
    pub exterior_fit: Option<LineFit>,
    /// `ln(full norm)` against `1/h`.
    pub full_fit: Option<LineFit>,
}

/// Parameters of a limiting-absorption sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Exterior radius `R`; defaults to the coefficient core radius.
    pub radius: Option<f64>,
    pub truncation: f64,
    pub probes: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            radius: None,
            truncation: 40.0,
            probes: 1,
            iters: 60,
            seed: 0,
        }
    }
}

/// Exterior and full weighted norms across `h`, with growth fits. `energy(h)`
/// supplies `E` per `h`; `eps = 0` selects the outgoing limit.
pub fn lap_sweep<F>(spec: &CoefficientSpec, s: f64, h_grid: &[f64], energy: F, eps: f64, cfg: &SweepConfig) -> NormReport
where
    F: Fn(f64) -> f64 + Sync,
{
    let radius = cfg.radius.unwrap_or_else(|| {
        let (a, b) = spec.core_interval();
        a.abs().max(b.abs())
    });
    let rows: Vec<NormRow> = h_grid
        .par_iter()
        .map(|&h| {
            let sp = spec.with_h(h);
            let e = energy(h);
            let point = if eps == 0.0 {
                SpectralPoint::outgoing(e)
            } else {
                SpectralPoint::new(e, eps)
            };
            let ext = WeightPair::l2(Weight::Exterior { s, r: radius }, Weight::Exterior { s, r: radius });
            let full = WeightPair::l2(Weight::Japanese { s }, Weight::Japanese { s });
            let run = |w: &WeightPair| opnorm_estimate(&sp, &point, w, cfg.truncation, cfg.probes, cfg.iters, cfg.seed);
            let (re, rf) = (run(&ext), run(&full));
            let error = match (&re, &rf) {
                (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
                _ => None,
            };
            let exterior = re.ok();
            let full = rf.ok();
            NormRow {
                h,
                energy: e,
                eps,
                exterior_scaled: exterior.as_ref().map_or(f64::NAN, |n| h * n.value()),
                log_full_scaled: full.as_ref().map_or(f64::NAN, |n| h * n.value().ln()),
                exterior,
                full,
                error,
            }
        })
        .collect();
    let ok_ext: Vec<&NormRow> = rows.iter().filter(|r| r.exterior.is_some()).collect();
    let exterior_fit = fit_line(
        &ok_ext.iter().map(|r| (1.0 / r.h).ln()).collect::<Vec<_>>(),
        &ok_ext.iter().map(|r| r.exterior.as_ref().unwrap().value().ln()).collect::<Vec<_>>(),
    );
    let ok_full: Vec<&NormRow> = rows.iter().filter(|r| r.full.is_some()).collect();
    let full_fit = fit_line(
        &ok_full.iter().map(|r| 1.0 / r.h).collect::<Vec<_>>(),
        &ok_full.iter().map(|r| r.full.as_ref().unwrap().value().ln()).collect::<Vec<_>>(),
    );
    NormReport {
        s,
        radius,
        truncation: cfg.truncation,
        rows,
        exterior_fit,
        full_fit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bv::SignedMeasure;

    fn box_rhs(spec: &CoefficientSpec, z: C64) -> GridFunction {
        let mesh = resolvent_mesh(spec, z, -3.0, 3.0, &[-1.0, 1.0]);
        let u = mesh.x.iter().map(|&x| C64::new(if x.abs() < 1.0 { 1.0 } else { 0.0 }, 0.0)).collect();
        GridFunction {
            p: vec![ZERO; mesh.len()],
            u,
            mesh,
        }
    }

    #[test]
    fn free_outgoing_matches_convolution() {
        let spec = CoefficientSpec::free(1.0);
        let pt = SpectralPoint::outgoing(1.0);
        let f = box_rhs(&spec, pt.z());
        let v = solve(&spec, &pt, &f).unwrap();
        for x in [1.5, 2.0, 7.0] {
            // (i/2κ)∫e^{iκ|x-y|}f(y)dy with κ = 1
            let want = I * C64::new(0.0, x).exp() * 1f64.sin();
            assert!((v.value(x) - want).norm() < 1e-12, "{x} {} {want}", v.value(x));
        }
        assert!(v.residual < 1e-9);
    }

    #[test]
    fn adjoint_is_exact_transpose() {
        let spec = CoefficientSpec {
            v0: SignedMeasure::dirac(0.3, 1.5),
            b1: crate::bv::PiecewiseBV::indicator(-1.0, 1.0, 0.7),
            ..CoefficientSpec::free(0.5)
        };
        let z = C64::new(1.0, 0.2);
        let mesh = resolvent_mesh(&spec, z, -2.0, 2.5, &[]);
        let g = Green::new(&spec, z, mesh.clone(), ExteriorRule::Decaying { outgoing: false }).unwrap();
        let n = mesh.len();
        let f: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let yu: Vec<C64> = (0..n).map(|i| C64::new((i as f64 * 0.23).cos(), 0.5)).collect();
        let yp: Vec<C64> = (0..n).map(|i| C64::new(0.1, (i as f64 * 0.05).sin())).collect();
        let (yl, yr) = (C64::new(0.3, -0.2), C64::new(-0.7, 0.4));
        let a = g.apply(&f);
        let lhs: C64 = (0..n).map(|i| yu[i].conj() * a.y[i][0] + yp[i].conj() * a.y[i][1]).sum::<C64>()
            + yl.conj() * a.tail_l
            + yr.conj() * a.tail_r;
        let t = g.adjoint(&yu, &yp, yl, yr);
        let rhs: C64 = (0..n).map(|i| t[i].conj() * f[i]).sum();
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm(), "{lhs} {rhs}");
    }
}
