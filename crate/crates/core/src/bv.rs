//! Exact calculus for piecewise-polynomial functions of bounded variation and
//! finite signed measures made of a piecewise-polynomial density plus atoms.

use crate::error::{Error, Result};
use crate::poly::Poly;
use serde::{Deserialize, Serialize};

/// Which endpoints of `(a, b)` carry atoms into an integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closure {
    /// `(a, b]`
    HalfOpen,
    /// `(a, b)`
    Open,
}

/// Piecewise polynomial on the partition of ℝ cut at `breaks`.
///
/// `pieces[k]` lives on `(breaks[k-1], breaks[k])` with the two unbounded tails at
/// index `0` and `breaks.len()`. One-sided values at a breakpoint come from the
/// adjacent pieces; the value of the function there is their average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseBV {
    pub breaks: Vec<f64>,
    pub pieces: Vec<Poly>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Avg,
}

impl PiecewiseBV {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Poly>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} pieces for {} breakpoints",
                pieces.len(),
                breaks.len()
            )));
        }
        if breaks.iter().any(|b| !b.is_finite()) || pieces.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("non-finite breakpoint or coefficient".into()));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("breakpoints must be strictly increasing".into()));
        }
        Ok(PiecewiseBV { breaks, pieces })
    }

    pub fn constant(v: f64) -> Self {
        PiecewiseBV {
            breaks: vec![],
            pieces: vec![Poly::constant(v)],
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// A single polynomial on all of ℝ.
    pub fn global(p: Poly) -> Self {
        PiecewiseBV {
            breaks: vec![],
            pieces: vec![p],
        }
    }

    /// `left` on `(-∞, x0)`, `right` on `(x0, ∞)`.
    pub fn step(x0: f64, left: f64, right: f64) -> Self {
        PiecewiseBV {
            breaks: vec![x0],
            pieces: vec![Poly::constant(left), Poly::constant(right)],
        }
    }

    /// `value · 1_{(a,b)}`.
    pub fn indicator(a: f64, b: f64, value: f64) -> Self {
        PiecewiseBV {
            breaks: vec![a, b],
            pieces: vec![Poly::zero(), Poly::constant(value), Poly::zero()],
        }
    }

    /// `p` on `(a, b)` and zero elsewhere.
    pub fn bump(a: f64, b: f64, p: Poly) -> Self {
        PiecewiseBV {
            breaks: vec![a, b],
            pieces: vec![Poly::zero(), p, Poly::zero()],
        }
    }

    /// Index of the piece containing `x`; a breakpoint maps to the piece on its right.
    pub fn piece_index(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x)
    }

    fn break_index(&self, x: f64) -> Option<usize> {
        let k = self.breaks.partition_point(|&b| b < x);
        (k < self.breaks.len() && self.breaks[k] == x).then_some(k)
    }

    pub fn left(&self, x: f64) -> f64 {
        match self.break_index(x) {
            Some(k) => self.pieces[k].eval(x),
            None => self.pieces[self.piece_index(x)].eval(x),
        }
    }

    pub fn right(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }

    /// Average of the one-sided values, which is the value off breakpoints.
    pub fn eval(&self, x: f64) -> f64 {
        match self.break_index(x) {
            Some(k) => 0.5 * (self.pieces[k].eval(x) + self.pieces[k + 1].eval(x)),
            None => self.pieces[self.piece_index(x)].eval(x),
        }
    }

    pub fn eval_side(&self, x: f64, side: Side) -> f64 {
        match side {
            Side::Left => self.left(x),
            Side::Right => self.right(x),
            Side::Avg => self.eval(x),
        }
    }

    /// Open interval `(lo, hi)` of piece `k`.
    pub fn piece_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.breaks[k - 1] };
        let hi = if k == self.breaks.len() { f64::INFINITY } else { self.breaks[k] };
        (lo, hi)
    }

    /// Same function with extra breakpoints inserted.
    pub fn refine(&self, extra: &[f64]) -> PiecewiseBV {
        let mut breaks: Vec<f64> = self.breaks.iter().chain(extra.iter()).copied().collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let mut pieces = Vec::with_capacity(breaks.len() + 1);
        for k in 0..=breaks.len() {
            let probe = match k {
                0 => breaks.first().map(|b| b - 1.0).unwrap_or(0.0),
                k if k == breaks.len() => breaks[k - 1] + 1.0,
                k => 0.5 * (breaks[k - 1] + breaks[k]),
            };
            pieces.push(self.pieces[self.piece_index(probe)].clone());
        }
        PiecewiseBV { breaks, pieces }
    }

    /// Pointwise combination on the common refinement.
    pub fn zip_with<F: Fn(&Poly, &Poly) -> Poly>(&self, o: &PiecewiseBV, f: F) -> PiecewiseBV {
        let a = self.refine(&o.breaks);
        let b = o.refine(&self.breaks);
        let pieces = a.pieces.iter().zip(&b.pieces).map(|(p, q)| f(p, q)).collect();
        PiecewiseBV {
            breaks: a.breaks,
            pieces,
        }
    }

    pub fn map<F: Fn(&Poly) -> Poly>(&self, f: F) -> PiecewiseBV {
        PiecewiseBV {
            breaks: self.breaks.clone(),
            pieces: self.pieces.iter().map(f).collect(),
        }
    }

    pub fn add(&self, o: &PiecewiseBV) -> PiecewiseBV {
        self.zip_with(o, |p, q| p.add(q))
    }

    pub fn sub(&self, o: &PiecewiseBV) -> PiecewiseBV {
        self.zip_with(o, |p, q| p.sub(q))
    }

    pub fn mul(&self, o: &PiecewiseBV) -> PiecewiseBV {
        self.zip_with(o, |p, q| p.mul(q))
    }

    pub fn scale(&self, s: f64) -> PiecewiseBV {
        self.map(|p| p.scale(s))
    }

    /// Drop breakpoints across which nothing changes.
    pub fn simplify(&self) -> PiecewiseBV {
        let mut breaks = Vec::new();
        let mut pieces = vec![self.pieces[0].clone()];
        for (k, &b) in self.breaks.iter().enumerate() {
            let next = &self.pieces[k + 1];
            if next == pieces.last().unwrap() {
                continue;
            }
            breaks.push(b);
            pieces.push(next.clone());
        }
        PiecewiseBV { breaks, pieces }
    }

    pub fn tails_constant(&self) -> bool {
        self.pieces[0].is_constant() && self.pieces.last().unwrap().is_constant()
    }

    pub fn tails_zero(&self) -> bool {
        self.pieces[0].is_zero() && self.pieces.last().unwrap().is_zero()
    }

    /// Jump `f^R - f^L` at breakpoint `k`.
    pub fn jump(&self, k: usize) -> f64 {
        let x = self.breaks[k];
        self.pieces[k + 1].eval(x) - self.pieces[k].eval(x)
    }

    /// Distributional derivative: piecewise derivative plus the jumps as atoms.
    pub fn derivative_measure(&self) -> SignedMeasure {
        let density = self.map(|p| p.deriv());
        let atoms = (0..self.breaks.len())
            .map(|k| (self.breaks[k], self.jump(k)))
            .filter(|&(_, m)| m != 0.0)
            .collect();
        SignedMeasure { density, atoms }
    }

    /// Total variation; infinite unless both tails are constant.
    pub fn total_variation(&self) -> f64 {
        self.derivative_measure().total_variation()
    }

    /// `(inf, sup)` over ℝ, including one-sided values at breakpoints.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, p) in self.pieces.iter().enumerate() {
            let (a, b) = self.piece_bounds(k);
            let (l, h) = p.range_on(a, b);
            lo = lo.min(l);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    pub fn inf(&self) -> f64 {
        self.range().0
    }

    pub fn sup(&self) -> f64 {
        self.range().1
    }

    pub fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    /// `∫ |f|^p` for `p ∈ {1, 2}`; infinite unless both tails vanish.
    pub fn lp_norm_pow(&self, p: u32) -> f64 {
        let mut s = 0.0;
        for (k, q) in self.pieces.iter().enumerate() {
            let (a, b) = self.piece_bounds(k);
            if q.is_zero() {
                continue;
            }
            if !a.is_finite() || !b.is_finite() {
                return f64::INFINITY;
            }
            s += match p {
                1 => q.abs_integral(a, b),
                _ => q.mul(q).integrate(a, b),
            };
        }
        s
    }

    pub fn l1_norm(&self) -> f64 {
        self.lp_norm_pow(1)
    }

    pub fn l2_norm(&self) -> f64 {
        self.lp_norm_pow(2).sqrt()
    }

    /// Smallest closed interval outside of which the function vanishes.
    pub fn support(&self) -> Option<(f64, f64)> {
        let nz: Vec<usize> = (0..self.pieces.len()).filter(|&k| !self.pieces[k].is_zero()).collect();
        let (&first, &last) = (nz.first()?, nz.last()?);
        Some((self.piece_bounds(first).0, self.piece_bounds(last).1))
    }

    pub fn max_degree(&self) -> usize {
        self.pieces.iter().map(|p| p.degree()).max().unwrap_or(0)
    }
}

/// Finite signed measure: piecewise-polynomial density plus finitely many atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub density: PiecewiseBV,
    /// `(location, mass)` sorted by location, locations distinct.
    pub atoms: Vec<(f64, f64)>,
}

impl SignedMeasure {
    pub fn zero() -> Self {
        SignedMeasure {
            density: PiecewiseBV::zero(),
            atoms: vec![],
        }
    }

    pub fn new(density: PiecewiseBV, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|(x, m)| !x.is_finite() || !m.is_finite()) {
            return Err(Error::Invalid("non-finite atom".into()));
        }
        let mut m = SignedMeasure {
            density,
            atoms: vec![],
        };
        for (x, mass) in atoms {
            if m.atoms.iter().any(|&(y, _)| y == x) {
                return Err(Error::Invalid(format!("duplicate atom at {x}")));
            }
            m.atoms.push((x, mass));
        }
        m.atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(m)
    }

    pub fn dirac(x: f64, mass: f64) -> Self {
        SignedMeasure {
            density: PiecewiseBV::zero(),
            atoms: vec![(x, mass)],
        }
    }

    pub fn absolutely_continuous(density: PiecewiseBV) -> Self {
        SignedMeasure {
            density,
            atoms: vec![],
        }
    }

    pub fn atom_at(&self, x: f64) -> f64 {
        self.atoms.iter().find(|a| a.0 == x).map(|a| a.1).unwrap_or(0.0)
    }

    fn merged_atoms(a: &[(f64, f64)], b: &[(f64, f64)], sb: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = a.to_vec();
        for &(x, m) in b {
            match out.iter_mut().find(|e| e.0 == x) {
                Some(e) => e.1 += sb * m,
                None => out.push((x, sb * m)),
            }
        }
        out.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        out
    }

    pub fn add(&self, o: &SignedMeasure) -> SignedMeasure {
        SignedMeasure {
            density: self.density.add(&o.density),
            atoms: Self::merged_atoms(&self.atoms, &o.atoms, 1.0),
        }
    }

    pub fn sub(&self, o: &SignedMeasure) -> SignedMeasure {
        SignedMeasure {
            density: self.density.sub(&o.density),
            atoms: Self::merged_atoms(&self.atoms, &o.atoms, -1.0),
        }
    }

    pub fn scale(&self, s: f64) -> SignedMeasure {
        SignedMeasure {
            density: self.density.scale(s),
            atoms: self.atoms.iter().map(|&(x, m)| (x, s * m)).collect(),
        }
    }

    /// `f μ` with atoms weighted by the average value `f^A`.
    pub fn weighted_by(&self, f: &PiecewiseBV) -> SignedMeasure {
        SignedMeasure {
            density: self.density.mul(f),
            atoms: self.atoms.iter().map(|&(x, m)| (x, m * f.eval(x))).collect(),
        }
    }

    /// `∫` over `(a, b]` or `(a, b)`.
    pub fn integrate(&self, a: f64, b: f64, closure: Closure) -> Result<f64> {
        if !(a < b) {
            return Err(Error::Invalid(format!("invalid interval ({a}, {b})")));
        }
        let d = self.density.refine(&[a, b]);
        let mut s = 0.0;
        for (k, p) in d.pieces.iter().enumerate() {
            let (lo, hi) = d.piece_bounds(k);
            if lo >= a && hi <= b && !p.is_zero() {
                s += p.integrate(lo, hi);
            }
        }
        for &(x, m) in &self.atoms {
            let inside = x > a && (x < b || (x == b && closure == Closure::HalfOpen));
            if inside {
                s += m;
            }
        }
        Ok(s)
    }

    /// `‖μ‖ = ∫|density| + Σ|mass|`.
    pub fn total_variation(&self) -> f64 {
        self.density.l1_norm() + self.atoms.iter().map(|a| a.1.abs()).sum::<f64>()
    }

    /// Right-continuous primitive `x ↦ μ([anchor, x])` for `x ≥ anchor`,
    /// `-μ((x, anchor))` below the anchor.
    pub fn cumulative(&self, anchor: f64) -> PiecewiseBV {
        let locs: Vec<f64> = self.atoms.iter().map(|a| a.0).collect();
        let d = self.density.refine(&locs);
        let anti: Vec<Poly> = d.pieces.iter().map(|p| p.antideriv()).collect();
        let mut pieces = Vec::with_capacity(anti.len());
        pieces.push(anti[0].clone());
        for (k, &x) in d.breaks.iter().enumerate() {
            let prev: &Poly = &pieces[k];
            let c = prev.eval(x) + self.atom_at(x) - anti[k + 1].eval(x);
            pieces.push(anti[k + 1].add_const(c));
        }
        let f = PiecewiseBV {
            breaks: d.breaks,
            pieces,
        };
        let shift = self.atom_at(anchor) - f.right(anchor);
        f.map(|p| p.add_const(shift))
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        if let Some((a, b)) = self.density.support() {
            lo = a;
            hi = b;
        }
        for &(x, m) in &self.atoms {
            if m != 0.0 {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// Outcome of comparing `d(fg)` with `f^A dg + g^A df`.
#[derive(Clone, Debug)]
pub struct ProductRuleReport {
    pub lhs: SignedMeasure,
    pub rhs: SignedMeasure,
    pub max_defect: f64,
}

/// Checks the BV product rule on a pair of functions.
pub fn product_rule_check(f: &PiecewiseBV, g: &PiecewiseBV) -> ProductRuleReport {
    let lhs = f.mul(g).derivative_measure();
    let rhs = g
        .derivative_measure()
        .weighted_by(f)
        .add(&f.derivative_measure().weighted_by(g));
    let max_defect = lhs.sub(&rhs).total_variation();
    ProductRuleReport {
        lhs,
        rhs,
        max_defect,
    }
}
