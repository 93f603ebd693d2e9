//! Dense real polynomials with exact calculus and real-root isolation.

use serde::{Deserialize, Serialize};

/// Real polynomial stored by ascending coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Poly {
    pub c: Vec<f64>,
}

impl Poly {
    pub fn new(mut c: Vec<f64>) -> Self {
        while c.len() > 1 && *c.last().unwrap() == 0.0 {
            c.pop();
        }
        if c.is_empty() {
            c.push(0.0);
        }
        Poly { c }
    }

    pub fn constant(v: f64) -> Self {
        Poly { c: vec![v] }
    }

    pub fn zero() -> Self {
        Poly::constant(0.0)
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly::new(vec![0.0, 1.0])
    }

    pub fn degree(&self) -> usize {
        self.c.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&v| v == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.c.len() == 1
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn deriv(&self) -> Poly {
        if self.c.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &a)| a * k as f64)
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn antideriv(&self) -> Poly {
        let mut c = Vec::with_capacity(self.c.len() + 1);
        c.push(0.0);
        for (k, &a) in self.c.iter().enumerate() {
            c.push(a / (k + 1) as f64);
        }
        Poly::new(c)
    }

    /// Exact integral over the bounded interval `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let p = self.antideriv();
        p.eval(b) - p.eval(a)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.c.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.c.len().max(o.c.len());
        let mut c = vec![0.0; n];
        for (i, v) in self.c.iter().enumerate() {
            c[i] += v;
        }
        for (i, v) in o.c.iter().enumerate() {
            c[i] += v;
        }
        Poly::new(c)
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(-1.0))
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![0.0; self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in o.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }

    pub fn add_const(&self, v: f64) -> Poly {
        let mut c = self.c.clone();
        c[0] += v;
        Poly::new(c)
    }

    /// Bound on the modulus of every complex root.
    pub fn cauchy_bound(&self) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let lead = self.c[n].abs();
        1.0 + self.c[..n].iter().map(|v| v.abs() / lead).fold(0.0, f64::max)
    }

    /// Distinct real roots in the open interval `(a, b)`, ascending.
    ///
    /// Infinite endpoints are replaced by the Cauchy root bound.
    pub fn roots_in(&self, a: f64, b: f64) -> Vec<f64> {
        if self.is_zero() || self.degree() == 0 {
            return Vec::new();
        }
        let cb = self.cauchy_bound() + 1.0;
        let lo = if a.is_finite() { a } else { -cb };
        let hi = if b.is_finite() { b } else { cb };
        if !(lo < hi) {
            return Vec::new();
        }
        let mut out = Vec::new();
        self.roots_rec(lo, hi, &mut out);
        out.retain(|&r| r > a && r < b);
        out.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
        out
    }

    fn roots_rec(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let n = self.degree();
        if n == 0 {
            return;
        }
        if n == 1 {
            let r = -self.c[0] / self.c[1];
            if r > lo && r < hi {
                out.push(r);
            }
            return;
        }
        let mut crit = Vec::new();
        self.deriv().roots_rec(lo, hi, &mut crit);
        let mut pts = Vec::with_capacity(crit.len() + 2);
        pts.push(lo);
        pts.extend(crit.iter().copied());
        pts.push(hi);
        let scale = self.c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
        for w in pts.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let (f0, f1) = (self.eval(x0), self.eval(x1));
            if f0 == 0.0 && x0 > lo {
                out.push(x0);
                continue;
            }
            if f0.abs() <= tiny && x0 > lo && crit.contains(&x0) {
                // double root touching zero at a critical point
                out.push(x0);
                continue;
            }
            if f0 * f1 < 0.0 {
                out.push(self.bisect(x0, x1, f0));
            }
        }
        if let Some(&last) = pts.last() {
            if self.eval(last) == 0.0 && last < hi {
                out.push(last);
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    fn bisect(&self, mut a: f64, mut b: f64, fa: f64) -> f64 {
        let sa = fa.signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.eval(m);
            if fm == 0.0 {
                return m;
            }
            if fm.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Infimum and supremum over the closure of `(a, b)`; infinite endpoints use limits.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut vals = Vec::new();
        for &e in &[a, b] {
            if e.is_finite() {
                vals.push(self.eval(e));
            } else if self.degree() == 0 {
                vals.push(self.c[0]);
            } else {
                let lead = *self.c.last().unwrap();
                let odd = self.degree() % 2 == 1;
                let s = if e > 0.0 || !odd { lead.signum() } else { -lead.signum() };
                vals.push(s * f64::INFINITY);
            }
        }
        for r in self.deriv().roots_in(a, b) {
            vals.push(self.eval(r));
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Exact `∫_a^b |p|` on a bounded interval.
    pub fn abs_integral(&self, a: f64, b: f64) -> f64 {
        if self.is_zero() || a >= b {
            return 0.0;
        }
        if !a.is_finite() || !b.is_finite() {
            return f64::INFINITY;
        }
        let anti = self.antideriv();
        let mut pts = vec![a];
        pts.extend(self.roots_in(a, b));
        pts.push(b);
        pts.windows(2)
            .map(|w| (anti.eval(w[1]) - anti.eval(w[0])).abs())
            .sum()
    }
}

/// Ratio `num / den` of polynomials with `den` nonvanishing on the piece where it is used.
#[derive(Clone, Debug, PartialEq)]
pub struct Rational {
    pub num: Poly,
    pub den: Poly,
}

impl Rational {
    pub fn poly(p: Poly) -> Self {
        Rational {
            num: p,
            den: Poly::constant(1.0),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.num.eval(x) / self.den.eval(x)
    }

    pub fn add(&self, o: &Rational) -> Rational {
        if self.den == o.den {
            return Rational {
                num: self.num.add(&o.num),
                den: self.den.clone(),
            };
        }
        Rational {
            num: self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            den: self.den.mul(&o.den),
        }
    }

    pub fn mul(&self, o: &Rational) -> Rational {
        Rational {
            num: self.num.mul(&o.num),
            den: self.den.mul(&o.den),
        }
    }

    pub fn scale(&self, s: f64) -> Rational {
        Rational {
            num: self.num.scale(s),
            den: self.den.clone(),
        }
    }

    pub fn recip(&self) -> Rational {
        Rational {
            num: self.den.clone(),
            den: self.num.clone(),
        }
    }

    /// Derivative `(N'D - ND') / D^2`.
    pub fn deriv(&self) -> Rational {
        Rational {
            num: self.num.deriv().mul(&self.den).sub(&self.num.mul(&self.den.deriv())),
            den: self.den.mul(&self.den),
        }
    }

    /// Infimum and supremum over the closure of `(a, b)`.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let crit_num = self
            .num
            .deriv()
            .mul(&self.den)
            .sub(&self.num.mul(&self.den.deriv()));
        let mut vals = Vec::new();
        for &e in &[a, b] {
            if e.is_finite() {
                vals.push(self.eval(e));
            } else {
                vals.push(self.limit_at(e));
            }
        }
        for r in crit_num.roots_in(a, b) {
            vals.push(self.eval(r));
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn limit_at(&self, e: f64) -> f64 {
        let (dn, dd) = (self.num.degree(), self.den.degree());
        if self.num.is_zero() {
            return 0.0;
        }
        let ln = *self.num.c.last().unwrap();
        let ld = *self.den.c.last().unwrap();
        if dn < dd {
            0.0
        } else if dn == dd {
            ln / ld
        } else {
            let odd = (dn - dd) % 2 == 1;
            let s = (ln / ld).signum() * if e < 0.0 && odd { -1.0 } else { 1.0 };
            s * f64::INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_derivative() {
        let p = Poly::new(vec![1.0, 2.0]);
        let q = Poly::new(vec![-1.0, 0.0, 3.0]);
        let pq = p.mul(&q);
        assert_eq!(pq.c, vec![-1.0, -2.0, 3.0, 6.0]);
        assert_eq!(pq.deriv().c, vec![-2.0, 6.0, 18.0]);
    }

    #[test]
    fn roots_of_cubic() {
        // (x-1)(x+2)(x-0.5)
        let p = Poly::new(vec![1.0, -1.0])
            .mul(&Poly::new(vec![2.0, 1.0]))
            .mul(&Poly::new(vec![-0.5, 1.0]));
        let r = p.roots_in(f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([-2.0, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(p.roots_in(0.6, 0.9).len(), 0);
    }

    #[test]
    fn range_of_quadratic() {
        let p = Poly::new(vec![0.0, -2.0, 1.0]);
        let (lo, hi) = p.range_on(0.0, 3.0);
        assert!((lo + 1.0).abs() < 1e-15);
        assert!((hi - 3.0).abs() < 1e-15);
        let (lo, hi) = p.range_on(f64::NEG_INFINITY, f64::INFINITY);
        assert!((lo + 1.0).abs() < 1e-15 && hi == f64::INFINITY);
    }

    #[test]
    fn abs_integral_splits_at_roots() {
        let p = Poly::x();
        assert!((p.abs_integral(-1.0, 2.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn rational_range() {
        // 1/(1+x^2) on R has sup 1 at 0 and inf 0 at infinity
        let r = Rational {
            num: Poly::constant(1.0),
            den: Poly::new(vec![1.0, 0.0, 1.0]),
        };
        let (lo, hi) = r.range_on(f64::NEG_INFINITY, f64::INFINITY);
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-15);
    }
}
