//! Spectral quadrature of Stone's formula for the cutoff Schrödinger and wave
//! propagators of an `h = 1` operator with compactly supported coefficients.

use crate::error::{Error, Result};
use crate::linalg::fit_line;
use crate::mesh::Mesh;
use crate::operator::CoefficientSpec;
use crate::quad::GaussRule;
use crate::resolvent::{Green, PANEL_BUDGET, PANEL_CAP, PANEL_ORDER};
use crate::resonance::{zero_resonance_test, CutoffSpec, MatchingDeterminant};
use crate::transfer::ExteriorRule;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Nodes per quadrature panel in `λ = √τ`.
pub const QUAD_ORDER: usize = 16;
/// Largest phase change of the integrand across one panel.
pub const PANEL_PHASE: f64 = 6.0;

/// `(1 - x²)^8` on `[-1, 1]`.
pub fn bump(x: f64) -> C64 {
    if x.abs() >= 1.0 {
        ZERO
    } else {
        C64::new((1.0 - x * x).powi(8), 0.0)
    }
}

/// Samples of `2λ J(λ²) χv` with `J(τ) = (2πi)^{-1} χ[R(√τ) - R(-√τ)]χ`, on
/// Gauss panels in `λ ∈ [0, √Λ]`.
#[derive(Clone, Debug)]
pub struct SpectralQuadrature {
    pub lambda_cut: f64,
    pub mesh: Arc<Mesh>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub jumps: Vec<Vec<C64>>,
    /// `⟨J(λ²)χv, χv⟩` per node; nonnegative up to roundoff.
    pub density: Vec<f64>,
    /// `‖χv‖²`
    pub input_mass: f64,
}

impl SpectralQuadrature {
    pub fn build<V: Fn(f64) -> C64>(spec: &CoefficientSpec, cutoff: &CutoffSpec, v: V, lambda_cut: f64, panels: usize) -> Result<Self> {
        if spec.h != 1.0 {
            return Err(Error::Invalid("propagators act on the h = 1 operator".into()));
        }
        if !(lambda_cut > 0.0) || panels == 0 {
            return Err(Error::Invalid("need Λ > 0 and at least one panel".into()));
        }
        MatchingDeterminant::new(spec)?;
        let outer = cutoff.chi.outer;
        let (a, b) = spec.core_interval();
        let lo = a.min(-outer) - 0.5;
        let hi = b.max(outer) + 0.5;
        let knots = cutoff.weight().knots();
        let mesh = Arc::new(spec.mesh(lo, hi, C64::new(lambda_cut, 0.0), &knots, PANEL_ORDER, PANEL_BUDGET, PANEL_CAP));
        let chi: Vec<f64> = mesh.x.iter().map(|&x| cutoff.chi.eval(x)).collect();
        let g: Vec<C64> = mesh.x.iter().zip(&chi).map(|(&x, c)| v(x) * c).collect();
        let inv_beta: Vec<f64> = mesh.x.iter().map(|&x| 1.0 / spec.beta.eval(x)).collect();
        let input_mass = mesh.w.iter().zip(&g).map(|(w, v)| w * v.norm_sqr()).sum();
        let rule = GaussRule::get(QUAD_ORDER);
        let top = lambda_cut.sqrt();
        let width = top / panels as f64;
        let mut nodes = vec![];
        let mut weights = vec![];
        for p in 0..panels {
            let (l0, l1) = (p as f64 * width, (p + 1) as f64 * width);
            for k in 0..QUAD_ORDER {
                nodes.push(0.5 * (l0 + l1) + 0.5 * (l1 - l0) * rule.nodes[k]);
                weights.push(0.5 * (l1 - l0) * rule.weights[k]);
            }
        }
        let samples: Vec<(Vec<C64>, f64)> = nodes
            .par_iter()
            .map(|&l| -> Result<(Vec<C64>, f64)> {
                let z = C64::new(l * l, 0.0);
                let plus = Green::new(spec, z, mesh.clone(), ExteriorRule::Outgoing(C64::new(l, 0.0)))?.apply(&g);
                let minus = Green::new(spec, z, mesh.clone(), ExteriorRule::Outgoing(C64::new(-l, 0.0)))?.apply(&g);
                let scale = 2.0 * l / (2.0 * PI * C64::new(0.0, 1.0));
                let diff: Vec<C64> = plus.y.iter().zip(&minus.y).map(|(a, b)| (a[0] - b[0]) * scale).collect();
                let dens: f64 = (0..diff.len())
                    .map(|i| (mesh.w[i] * inv_beta[i] * diff[i] * g[i].conj()).re)
                    .sum::<f64>()
                    / (2.0 * l);
                let jump = diff.iter().zip(&chi).map(|(d, c)| d * c).collect();
                Ok((jump, dens))
            })
            .collect::<Result<_>>()?;
        let (jumps, density) = samples.into_iter().unzip();
        Ok(SpectralQuadrature {
            lambda_cut,
            mesh,
            nodes,
            weights,
            jumps,
            density,
            input_mass,
        })
    }

    /// `Σ_k w_k K(λ_k) 2λ_k J(λ_k²)χv` on the mesh nodes.
    pub fn assemble<K: Fn(f64) -> C64>(&self, kernel: K) -> Vec<C64> {
        let n = self.mesh.len();
        let mut out = vec![ZERO; n];
        for (k, &l) in self.nodes.iter().enumerate() {
            let c = kernel(l) * self.weights[k];
            for (o, j) in out.iter_mut().zip(&self.jumps[k]) {
                *o += c * j;
            }
        }
        out
    }

    pub fn norm(&self, v: &[C64]) -> f64 {
        self.mesh.w.iter().zip(v).map(|(w, x)| w * x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖1_{[0,Λ]}(H)χv‖²` from the spectral density.
    pub fn projected_mass(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.density)
            .map(|((l, w), d)| 2.0 * l * w * d)
            .sum()
    }

    /// Upper bound for `‖1_{(Λ,∞)}(H)χv‖²`, including any negative spectrum.
    pub fn tail_mass(&self) -> f64 {
        (self.input_mass - self.projected_mass()).max(0.0)
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Which propagator is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Propagator {
    Schrodinger,
    Cosine,
    Sine,
}

impl Propagator {
    pub fn kernel(self, t: f64, l: f64) -> C64 {
        match self {
            Propagator::Schrodinger => C64::new(0.0, -t * l * l).exp(),
            Propagator::Cosine => C64::new((t * l).cos(), 0.0),
            Propagator::Sine => C64::new((t * l).sin() / l, 0.0),
        }
    }

    /// Phase rate of the kernel in `λ` at time `t`.
    fn rate(self, t: f64, top: f64) -> f64 {
        match self {
            Propagator::Schrodinger => 2.0 * t * top,
            _ => t,
        }
    }
}

/// Panels needed so that the integrand phase changes by at most [`PANEL_PHASE`].
pub fn panels_for(kind: Propagator, cutoff: &CutoffSpec, t_max: f64, lambda_cut: f64) -> usize {
    let top = lambda_cut.sqrt();
    let rate = kind.rate(t_max, top) + 2.0 * (cutoff.chi.outer + 1.0);
    ((rate * top / PANEL_PHASE).ceil() as usize).max(8)
}

/// Time samples of `‖χ U(t) 1_{[0,Λ]}(H) χv‖` with a grid-halving error estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub kind: Propagator,
    pub lambda_cut: f64,
    pub panels: usize,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    /// Same samples with half the panels.
    pub coarse: Vec<f64>,
    /// `|values - coarse|` relative to `max(values, 1e-8 · max values)`.
    pub error: Vec<f64>,
    pub refinement_needed: bool,
    pub input_mass: f64,
    pub projected_mass: f64,
    pub tail_mass: f64,
    pub min_density: f64,
    pub threshold_resonance: bool,
}

fn sample(q: &SpectralQuadrature, kind: Propagator, t_grid: &[f64]) -> Vec<f64> {
    t_grid
        .par_iter()
        .map(|&t| q.norm(&q.assemble(|l| kind.kernel(t, l))))
        .collect()
}

/// Shared driver for the three propagators.
pub fn evolve<V: Fn(f64) -> C64 + Sync>(
    spec: &CoefficientSpec,
    cutoff: &CutoffSpec,
    v: V,
    t_grid: &[f64],
    lambda_cut: f64,
    kind: Propagator,
) -> Result<EvolutionReport> {
    let t_max = t_grid.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let panels = panels_for(kind, cutoff, t_max, lambda_cut);
    let fine = SpectralQuadrature::build(spec, cutoff, &v, lambda_cut, panels)?;
    let coarse_q = SpectralQuadrature::build(spec, cutoff, &v, lambda_cut, panels.div_ceil(2))?;
    let values = sample(&fine, kind, t_grid);
    let coarse = sample(&coarse_q, kind, t_grid);
    let floor = 1e-8 * values.iter().copied().fold(0.0, f64::max);
    let error: Vec<f64> = values
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a - b).abs() / a.max(floor).max(1e-300))
        .collect();
    let threshold_resonance = zero_resonance_test(spec)?.has_zero_resonance;
    Ok(EvolutionReport {
        kind,
        lambda_cut,
        panels,
        t: t_grid.to_vec(),
        refinement_needed: error.iter().any(|&e| e > 0.05),
        values,
        coarse,
        error,
        input_mass: fine.input_mass,
        projected_mass: fine.projected_mass(),
        tail_mass: fine.tail_mass(),
        min_density: fine.min_density(),
        threshold_resonance,
    })
}

pub fn schrodinger_evolve<V: Fn(f64) -> C64 + Sync>(
    spec: &CoefficientSpec,
    cutoff: &CutoffSpec,
    v: V,
    t_grid: &[f64],
    lambda_cut: f64,
) -> Result<EvolutionReport> {
    evolve(spec, cutoff, v, t_grid, lambda_cut, Propagator::Schrodinger)
}

/// `kind` is [`Propagator::Cosine`] or [`Propagator::Sine`].
pub fn wave_evolve<V: Fn(f64) -> C64 + Sync>(
    spec: &CoefficientSpec,
    cutoff: &CutoffSpec,
    v: V,
    t_grid: &[f64],
    lambda_cut: f64,
    kind: Propagator,
) -> Result<EvolutionReport> {
    if kind == Propagator::Schrodinger {
        return Err(Error::Invalid("wave kind must be cosine or sine".into()));
    }
    evolve(spec, cutoff, v, t_grid, lambda_cut, kind)
}

/// Exponential fit of positive samples on a time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    pub intercept: f64,
    pub used: usize,
    pub excluded: usize,
}

pub fn decay_fit(t: &[f64], samples: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let mut x = vec![];
    let mut y = vec![];
    let mut excluded = 0;
    for (&ti, &s) in t.iter().zip(samples) {
        if ti < window.0 || ti > window.1 {
            continue;
        }
        if s > 0.0 && s.is_finite() {
            x.push(ti);
            y.push(s.ln());
        } else {
            excluded += 1;
        }
    }
    let fit = fit_line(&x, &y).ok_or_else(|| Error::Invalid("need two positive samples in the window".into()))?;
    Ok(DecayFit {
        rate: -fit.slope,
        r_squared: fit.r_squared,
        intercept: fit.intercept,
        used: x.len(),
        excluded,
    })
}

/// Trapezoid sum of `values²` over `t`.
pub fn time_integral(t: &[f64], values: &[f64]) -> f64 {
    t.windows(2)
        .zip(values.windows(2))
        .map(|(tt, vv)| 0.5 * (tt[1] - tt[0]) * (vv[0] * vv[0] + vv[1] * vv[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bv::PiecewiseBV;

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.5).collect();
        let s: Vec<f64> = t.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        let f = decay_fit(&t, &s, (0.0, 30.0)).unwrap();
        assert!((f.rate - 0.3).abs() < 1e-6 && f.excluded == 0);
        let mut s2 = s.clone();
        s2[3] = 0.0;
        assert_eq!(decay_fit(&t, &s2, (0.0, 30.0)).unwrap().excluded, 1);
    }

    #[test]
    fn initial_values() {
        let spec = CoefficientSpec {
            b1: PiecewiseBV::indicator(-1.0, 1.0, 1.0),
            v1: PiecewiseBV::indicator(-1.0, 1.0, 10.0),
            ..CoefficientSpec::free(1.0)
        };
        let c = CutoffSpec::new(1.5, 2.5);
        let q = SpectralQuadrature::build(&spec, &c, bump, 400.0, 64).unwrap();
        assert!(q.min_density() > -1e-10 * q.density.iter().fold(0.0f64, |a, b| a.max(*b)));
        let sine = q.norm(&q.assemble(|l| Propagator::Sine.kernel(0.0, l)));
        assert_eq!(sine, 0.0);
        let cos0 = q.norm(&q.assemble(|l| Propagator::Cosine.kernel(0.0, l)));
        let sch0 = q.norm(&q.assemble(|l| Propagator::Schrodinger.kernel(0.0, l)));
        assert!((cos0 - sch0).abs() < 1e-12 * cos0);
        // nothing below zero and little above Λ for this smooth datum
        assert!(q.tail_mass() < 1e-6 * q.input_mass, "{} {}", q.tail_mass(), q.input_mass);
        assert!((cos0 * cos0 - q.input_mass).abs() < 1e-5 * q.input_mass);
    }

    #[test]
    fn sine_derivative_is_cosine() {
        let spec = CoefficientSpec {
            v1: PiecewiseBV::indicator(-1.0, 1.0, 3.0),
            ..CoefficientSpec::free(1.0)
        };
        let c = CutoffSpec::new(1.5, 2.5);
        let q = SpectralQuadrature::build(&spec, &c, bump, 400.0, 80).unwrap();
        let (t, dt) = (1.3, 1e-4);
        let sp = q.assemble(|l| Propagator::Sine.kernel(t + dt, l));
        let sm = q.assemble(|l| Propagator::Sine.kernel(t - dt, l));
        let cs = q.assemble(|l| Propagator::Cosine.kernel(t, l));
        let d: Vec<C64> = sp.iter().zip(&sm).zip(&cs).map(|((a, b), c)| (a - b) / (2.0 * dt) - c).collect();
        assert!(q.norm(&d) <= 0.02 * q.norm(&cs));
    }

    #[test]
    fn free_gaussian_matches_closed_form() {
        let spec = CoefficientSpec::free(1.0);
        let c = CutoffSpec::new(6.0, 7.0);
        let g = |x: f64| C64::new((-x * x).exp(), 0.0);
        let rep = schrodinger_evolve(&spec, &c, g, &[1.0, 5.0], 25.0).unwrap();
        for (k, &t) in [1.0f64, 5.0].iter().enumerate() {
            // e^{-itH}e^{-x²} = (1+4it)^{-1/2} e^{-x²/(1+4it)}, cut off by χ
            let den = C64::new(1.0, 4.0 * t);
            let m = Mesh::uniform(-7.0, 7.0, 280, 16);
            let exact: f64 = m
                .x
                .iter()
                .zip(&m.w)
                .map(|(&x, w)| w * (c.chi.eval(x) * (-x * x / den).exp() / den.sqrt()).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!((rep.values[k] - exact).abs() < 0.01 * exact, "t = {t}: {} vs {exact}", rep.values[k]);
        }
        assert!(rep.threshold_resonance);
    }

    #[test]
    fn free_cosine_is_sharp() {
        let spec = CoefficientSpec::free(1.0);
        let c = CutoffSpec::new(1.0, 2.0);
        let rep = wave_evolve(&spec, &c, bump, &[0.0, 1.0, 3.5, 5.0], 400.0, Propagator::Cosine).unwrap();
        assert!(rep.values[3] <= 0.02 * rep.values[0], "{:?}", rep.values);
        assert!(rep.values[2] <= 0.02 * rep.values[0]);
        assert!(rep.values[1] > 0.1 * rep.values[0]);
    }
}
