use bvlap_core::mesh::{GridFunction, Mesh};
use bvlap_core::operator::{apply_operator, long_range_pairing, quadratic_form, rescale, unscale};
use bvlap_core::resolvent::{resolvent_mesh, solve, SolutionField};
use bvlap_core::{fit_line, CoefficientSpec, PiecewiseBV, Poly, SignedMeasure, SpectralPoint};
use num_complex::Complex64 as C64;
use std::sync::Arc;

fn gaussian(mesh: &Arc<Mesh>, c: f64, k: f64, a: C64) -> GridFunction {
    GridFunction {
        u: mesh.x.iter().map(|&x| a * (-k * (x - c) * (x - c)).exp()).collect(),
        p: vec![C64::default(); mesh.len()],
        mesh: mesh.clone(),
    }
}

fn magnetic_spec(h: f64) -> CoefficientSpec {
    CoefficientSpec {
        alpha: PiecewiseBV::constant(1.0).add(&PiecewiseBV::bump(-1.0, 0.5, Poly::new(vec![0.4, 0.2]))),
        beta: PiecewiseBV::constant(1.0).add(&PiecewiseBV::indicator(-0.3, 1.2, 0.6)),
        b0: PiecewiseBV::indicator(-0.5, 0.5, 0.8),
        b1: PiecewiseBV::indicator(-1.0, 1.0, 0.7),
        v0: SignedMeasure::new(PiecewiseBV::indicator(0.0, 1.0, -0.5), vec![(0.3, 1.5), (-0.7, -0.6)]).unwrap(),
        v1: PiecewiseBV::indicator(-1.5, 1.5, -1.0),
        ..CoefficientSpec::free(h)
    }
}

/// `∫ conj(f) g β⁻¹` on the mesh.
fn pairing(spec: &CoefficientSpec, f: &[C64], g: &[C64], mesh: &Mesh) -> C64 {
    mesh.x
        .iter()
        .enumerate()
        .map(|(i, &x)| f[i].conj() * g[i] * mesh.w[i] / spec.beta.eval(x))
        .sum()
}

/// Exterior mass `∫|v|²` of both tails for unit β outside the mesh.
fn tail_mass(v: &SolutionField) -> f64 {
    let l = v.tail_l.norm_sqr() * v.mode_l[0].norm_sqr() / (2.0 * v.sigma_l.re);
    let r = v.tail_r.norm_sqr() * v.mode_r[0].norm_sqr() / (-2.0 * v.sigma_r.re);
    l + r
}

fn thomas(sub: &[C64], diag: &[C64], sup: &[C64], rhs: &[C64]) -> Vec<C64> {
    let n = diag.len();
    let mut c = vec![C64::default(); n];
    let mut d = vec![C64::default(); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { C64::default() };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![C64::default(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[test]
fn dense_finite_difference_oracle() {
    // -u'' + V u - z u = f with a well and an atom on a grid through the atom
    let spec = CoefficientSpec {
        v1: PiecewiseBV::indicator(-1.0, 1.0, -2.0),
        v0: SignedMeasure::dirac(0.25, 1.5),
        ..CoefficientSpec::free(1.0)
    };
    let z = C64::new(1.0, 1.0);
    let pt = SpectralPoint::new(z.re, z.im);
    let mesh = resolvent_mesh(&spec, z, -4.0, 4.0, &[]);
    let f = gaussian(&mesh, 0.4, 3.0, C64::new(1.0, 0.5));
    let v = solve(&spec, &pt, &f).unwrap();

    let dx = 0.0025;
    let half = 12000;
    let xs: Vec<f64> = (-half..=half).map(|k| k as f64 * dx).collect();
    let n = xs.len();
    let off = vec![C64::new(-1.0 / (dx * dx), 0.0); n];
    let diag: Vec<C64> = xs
        .iter()
        .map(|&x| {
            let atom = if (x - 0.25).abs() < dx / 2.0 { 1.5 / dx } else { 0.0 };
            let well = if x.abs() < 1.0 {
                -2.0
            } else if x.abs() == 1.0 {
                -1.0
            } else {
                0.0
            };
            C64::new(2.0 / (dx * dx) + well + atom, 0.0) - z
        })
        .collect();
    let rhs: Vec<C64> = xs.iter().map(|&x| C64::new(1.0, 0.5) * (-3.0 * (x - 0.4) * (x - 0.4)).exp()).collect();
    let u = thomas(&off, &diag, &off, &rhs);
    for x in [-2.0, -0.5, 0.25, 0.8, 3.0, 6.0] {
        let k = ((x / dx).round() as i64 + half) as usize;
        let got = v.value(x);
        assert!((got - u[k]).norm() < 2e-4 * u[k].norm().max(1e-3), "{x}: {got} vs {}", u[k]);
    }
}

#[test]
fn residuals_are_small() {
    for (h, e, eps) in [(1.0, 1.0, 0.3), (0.5, 2.0, -0.1), (0.2, 0.7, 0.05), (1.0, 3.0, 1e-3)] {
        let spec = magnetic_spec(h);
        let pt = SpectralPoint::new(e, eps);
        let mesh = resolvent_mesh(&spec, pt.z(), -3.0, 3.0, &[]);
        let f = gaussian(&mesh, -0.2, 2.0, C64::new(0.3, -1.0));
        let v = solve(&spec, &pt, &f).unwrap();
        assert!(v.residual <= 1e-9, "{h} {e} {eps}: {}", v.residual);
    }
}

#[test]
fn exterior_is_exact_exponential() {
    let spec = magnetic_spec(1.0);
    let pt = SpectralPoint::new(1.3, 0.2);
    let mesh = resolvent_mesh(&spec, pt.z(), -3.0, 3.0, &[]);
    let f = gaussian(&mesh, 0.0, 8.0, C64::new(1.0, 0.0));
    let v = solve(&spec, &pt, &f).unwrap();
    let k = v.kappa;
    for (x1, x2) in [(3.5, 5.0), (4.0, 9.0), (-3.5, -6.0)] {
        let ratio = v.value(x2) / v.value(x1);
        let want = (C64::new(0.0, 1.0) * k * (x2 - x1).abs()).exp();
        assert!((ratio - want).norm() < 1e-10 * want.norm(), "{x1} {x2}: {ratio} {want}");
    }
}

#[test]
fn absorption_identity() {
    for eps in [0.4, -0.2, 0.01] {
        let spec = magnetic_spec(1.0);
        let pt = SpectralPoint::new(1.0, eps);
        let mesh = resolvent_mesh(&spec, pt.z(), -6.0, 6.0, &[]);
        let f = gaussian(&mesh, 0.3, 1.0, C64::new(0.2, 0.9));
        let v = solve(&spec, &pt, &f).unwrap();
        let fv = pairing(&spec, &v.grid.u, &f.u, &mesh);
        let mass = pairing(&spec, &v.grid.u, &v.grid.u, &mesh).re + tail_mass(&v);
        assert!((fv.im + eps * mass).abs() < 1e-10 * (eps.abs() * mass).max(1e-12), "{eps}: {fv} {mass}");
        assert!(fv.norm() <= f.l2_sq().sqrt() * mass.sqrt() * 2.0);
    }
}

#[test]
fn adjoint_consistency() {
    let spec = magnetic_spec(0.7);
    let pt = SpectralPoint::new(1.4, 0.3);
    let mesh = resolvent_mesh(&spec, pt.z(), -4.0, 4.0, &[]);
    let f = gaussian(&mesh, -0.5, 2.0, C64::new(1.0, -0.4));
    let g = gaussian(&mesh, 0.6, 1.5, C64::new(0.2, 0.8));
    let rf = solve(&spec, &pt, &f).unwrap();
    let rg = solve(&spec, &pt.conj(), &g).unwrap();
    let a = pairing(&spec, &rf.grid.u, &g.u, &mesh);
    let b = pairing(&spec, &f.u, &rg.grid.u, &mesh);
    assert!((a - b).norm() < 1e-9 * a.norm(), "{a} {b}");
}

#[test]
fn solve_is_linear() {
    let spec = magnetic_spec(1.0);
    let pt = SpectralPoint::new(0.8, 0.1);
    let mesh = resolvent_mesh(&spec, pt.z(), -3.0, 3.0, &[]);
    let f = gaussian(&mesh, 0.0, 1.0, C64::new(1.0, 0.0));
    let f2 = gaussian(&mesh, 0.0, 1.0, C64::new(2.0, 0.0));
    let a = solve(&spec, &pt, &f).unwrap();
    let b = solve(&spec, &pt, &f2).unwrap();
    for (x, y) in a.grid.u.iter().zip(&b.grid.u) {
        assert!((2.0 * x - y).norm() <= 1e-13 * y.norm().max(1e-300));
    }
}

#[test]
fn operator_pairs_to_form() {
    let spec = magnetic_spec(0.8);
    let pt = SpectralPoint::new(1.1, 0.5);
    let mesh = resolvent_mesh(&spec, pt.z(), -3.0, 3.0, &[]);
    let f = gaussian(&mesh, 0.1, 2.0, C64::new(0.5, 1.0));
    let u = solve(&spec, &pt, &f).unwrap().grid;
    let w = spec.grid_function(
        mesh.clone(),
        |x| C64::new(1.0, -0.3) * (-4.0 * x * x).exp(),
        |x| C64::new(1.0, -0.3) * (-8.0 * x) * (-4.0 * x * x).exp(),
    );
    let pu = apply_operator(&u, &spec, 1e-9).unwrap();
    let lhs = pairing(&spec, &pu, &w.u, &mesh);
    let rhs = quadratic_form(&u, &w, &spec).unwrap() + long_range_pairing(&u, &w, &spec);
    assert!((lhs - rhs).norm() < 1e-10 * rhs.norm(), "{lhs} {rhs}");
}

#[test]
fn rescaled_operator_matches() {
    let unit = CoefficientSpec {
        v0: SignedMeasure::absolutely_continuous(PiecewiseBV::bump(-1.0, 1.0, Poly::new(vec![1.0, 0.0, -1.0]))),
        b1: PiecewiseBV::bump(-1.0, 1.0, Poly::new(vec![0.5, 0.0, -0.5])),
        alpha: PiecewiseBV::constant(1.0).add(&PiecewiseBV::bump(-0.5, 0.5, Poly::new(vec![0.3, 0.0, -1.2]))),
        ..CoefficientSpec::free(1.0)
    };
    let lambda = C64::new(3.0, -0.4);
    let (sc, pt) = rescale(&unit, lambda).unwrap();
    let h = sc.h;
    let back = unscale(&sc);
    assert!((back.b1.eval(0.2) - unit.b1.eval(0.2)).abs() < 1e-15);
    let mesh = resolvent_mesh(&sc, pt.z(), -2.0, 2.0, &[]);
    let u = |x: f64| C64::new(x.cos(), 0.5 * x) * (-x * x).exp();
    let du = |x: f64| C64::new(-x.sin(), 0.5) * (-x * x).exp() + C64::new(x.cos(), 0.5 * x) * (-2.0 * x) * (-x * x).exp();
    let gs = sc.grid_function(mesh.clone(), u, du);
    let gu = unit.grid_function(mesh.clone(), u, du);
    let ps = apply_operator(&gs, &sc, 1e-9).unwrap();
    let pu = apply_operator(&gu, &unit, 1e-9).unwrap();
    let z = pt.z();
    let l2 = lambda * lambda;
    let scale = pu.iter().map(|p| p.norm()).fold(1.0, f64::max);
    for i in 0..mesh.len() {
        let a = (ps[i] - z * gs.u[i]) / (h * h);
        let b = pu[i] - l2 * gu.u[i];
        assert!((a - b).norm() < 1e-12 * scale * (1.0 / (h * h)), "{i}: {a} {b}");
    }
}

#[test]
fn delta_well_blows_up_like_inverse_eps() {
    let spec = CoefficientSpec {
        v0: SignedMeasure::dirac(0.0, -2.0),
        ..CoefficientSpec::free(1.0)
    };
    let mut x = vec![];
    let mut y = vec![];
    for eps in [1e-2, 1e-3, 1e-4] {
        let pt = SpectralPoint::new(-1.0, eps);
        let mesh = resolvent_mesh(&spec, pt.z(), -20.0, 20.0, &[]);
        let f = gaussian(&mesh, 0.2, 1.0, C64::new(1.0, 0.0));
        let v = solve(&spec, &pt, &f).unwrap();
        x.push(eps.ln());
        y.push((v.grid.l2_sq() + tail_mass(&v)).sqrt().ln());
    }
    let fit = fit_line(&x, &y).unwrap();
    assert!((fit.slope + 1.0).abs() < 0.05, "{}", fit.slope);
}
