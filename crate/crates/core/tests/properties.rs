use bvlap_core::bv::{product_rule_check, Closure, PiecewiseBV, SignedMeasure};
use bvlap_core::carleman::{AtomInequality, CarlemanWeight, PhaseSpec, RemainderMeasure};
use bvlap_core::resonance::MatchingDeterminant;
use bvlap_core::{CoefficientSpec, Poly};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn poly(max_deg: usize) -> impl Strategy<Value = Poly> {
    prop::collection::vec(-3.0f64..3.0, 1..=max_deg + 1).prop_map(Poly::new)
}

/// Up to ten breakpoints, cubic pieces, constant tails.
fn bv() -> impl Strategy<Value = PiecewiseBV> {
    prop::collection::btree_set(-500i32..500, 1..=10).prop_flat_map(|set| {
        let breaks: Vec<f64> = set.into_iter().map(|k| k as f64 / 100.0).collect();
        let n = breaks.len();
        (
            Just(breaks),
            -3.0f64..3.0,
            prop::collection::vec(poly(3), n - 1),
            -3.0f64..3.0,
        )
            .prop_map(|(breaks, l, mid, r)| {
                let mut pieces = vec![Poly::constant(l)];
                pieces.extend(mid);
                pieces.push(Poly::constant(r));
                PiecewiseBV::new(breaks, pieces).unwrap()
            })
    })
}

fn point_near(f: &PiecewiseBV, pick: usize, x: f64, snap: bool) -> f64 {
    if snap {
        f.breaks[pick % f.breaks.len()]
    } else {
        x
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ftc_holds(f in bv(), x in -6.0f64..6.0, y in -6.0f64..6.0, i in 0usize..20, j in 0usize..20, sa: bool, sb: bool) {
        let a = point_near(&f, i, x, sa);
        let b = point_near(&f, j, y, sb);
        prop_assume!(a < b);
        let mu = f.derivative_measure();
        let scale = f.sup_abs().max(1.0);
        let v = mu.integrate(a, b, Closure::HalfOpen).unwrap();
        prop_assert!((v - (f.right(b) - f.right(a))).abs() <= 1e-12 * scale);
    }

    #[test]
    fn product_rule(f in bv(), g in bv()) {
        let r = product_rule_check(&f, &g);
        prop_assert!(r.max_defect <= 1e-12 * r.lhs.total_variation().max(1.0));
    }

    #[test]
    fn cumulative_inverts_derivative(f in bv(), anchor in -6.0f64..6.0) {
        let back = f.derivative_measure().cumulative(anchor);
        let shift = f.eval(-10.0) - back.eval(-10.0);
        for x in [-7.0, -2.2, 0.1, 3.3, 8.0] {
            prop_assert!((back.eval(x) + shift - f.eval(x)).abs() <= 1e-11 * f.sup_abs().max(1.0));
        }
        let mu = f.derivative_measure();
        let twice = mu.cumulative(anchor).derivative_measure();
        prop_assert!(twice.sub(&mu).total_variation() <= 1e-11 * mu.total_variation().max(1.0));
    }

    #[test]
    fn averaging_inequality(f in bv()) {
        let sq = f.mul(&f);
        for &x in &f.breaks {
            prop_assert!(sq.eval(x) >= f.eval(x).powi(2) - 1e-12 * sq.eval(x).abs().max(1.0));
        }
    }

    #[test]
    fn phase_invariants(r1 in 0.2f64..3.0, k in 0.0f64..5.0, x in 0.0f64..10.0) {
        let p = PhaseSpec::new(r1, k).unwrap();
        prop_assert_eq!(p.eval(0.0), 0.0);
        prop_assert!((p.eval(x) - p.eval(-x)).abs() <= 1e-12 * p.eval(x).abs().max(1.0));
        prop_assert!(p.deriv(x) >= 0.0);
        if x > 0.0 && x <= r1 {
            prop_assert!((p.deriv(x) - k).abs() <= 1e-12 * k.max(1.0));
        }
        if x > 2.0 * r1 {
            prop_assert_eq!(p.deriv(x), 0.0);
        }
    }

    #[test]
    fn atom_inequalities_hold(tau in 0.01f64..20.0, mass in 0.0f64..50.0) {
        let a = AtomInequality::new(tau, (8.0 / tau).max(2.0), 1.0, mass);
        prop_assert!(a.holds(), "{:?}", a);
    }

    #[test]
    fn weight_is_monotone_and_bounded(
        atoms in prop::collection::vec((0.1f64..3.0, 0.0f64..2.0, any::<bool>()), 0..4),
        tau in 0.2f64..4.0,
        eta in 1e-3f64..1.0,
        x in -8.0f64..8.0,
    ) {
        let mut locs: Vec<(f64, f64)> = vec![];
        for (x, m, neg) in atoms {
            let x = if neg { -x } else { x };
            if locs.iter().all(|a| (a.0 - x).abs() > 1e-3) {
                locs.push((x, m));
            }
        }
        let mu = RemainderMeasure::from_atoms(locs).unwrap();
        let w = CarlemanWeight::new(mu, tau, 1.0, eta).unwrap();
        prop_assert!(w.density(x) >= 0.0);
        prop_assert!(w.eval(x).abs() <= w.log_sup_bound.exp() * (1.0 + 1e-12));
    }

    #[test]
    fn determinant_symmetry(depth in -6.0f64..6.0, c in -3.0f64..3.0, b in -2.0f64..2.0, re in 0.3f64..6.0, im in -2.0f64..0.5) {
        let spec = CoefficientSpec {
            v1: PiecewiseBV::indicator(-1.0, 1.0, depth),
            v0: SignedMeasure::dirac(0.2, c),
            b1: PiecewiseBV::indicator(-0.5, 1.0, b),
            ..CoefficientSpec::free(1.0)
        };
        let det = MatchingDeterminant::new(&spec).unwrap();
        let l = C64::new(re, im);
        let a = det.eval(l).unwrap();
        let m = det.eval(-l.conj()).unwrap();
        prop_assert!((a.norm() - m.norm()).abs() <= 1e-9 * a.norm().max(1.0), "{} {}", a, m);
        let real = MatchingDeterminant::new(&CoefficientSpec { b1: PiecewiseBV::zero(), ..spec }).unwrap();
        let a = real.eval(l).unwrap();
        let m = real.eval(-l.conj()).unwrap();
        prop_assert!((a - m.conj()).norm() <= 1e-9 * a.norm().max(1.0), "{} {}", a, m);
    }
}
