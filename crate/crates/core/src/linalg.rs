//! Lanczos norm estimation and least-squares fits.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Bracket for an operator norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Nondecreasing lower bounds, one per iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

impl NormEstimate {
    pub fn zero() -> Self {
        NormEstimate {
            lower: 0.0,
            upper: 0.0,
            history: vec![0.0],
            converged: true,
        }
    }

    pub fn value(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn gap(&self) -> f64 {
        if self.upper > 0.0 {
            (self.upper - self.lower) / self.upper
        } else {
            0.0
        }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `sqrt(λ_max(M))` for a Hermitian positive semidefinite `M`, by Lanczos with
/// full reorthogonalization from a seeded random start. The upper end adds the
/// Ritz residual to the top Ritz value.
pub fn lanczos_norm<F>(apply: F, n: usize, iters: usize, seed: u64, gap_target: f64) -> NormEstimate
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    if n == 0 {
        return NormEstimate::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);
    let mut basis: Vec<Vec<C64>> = vec![q];
    let mut alphas: Vec<f64> = vec![];
    let mut betas: Vec<f64> = vec![];
    let mut history = vec![];
    let mut best = 0.0f64;
    let mut upper = f64::INFINITY;
    let iters = iters.min(n).max(1);
    for k in 0..iters {
        let mut w = apply(&basis[k]);
        let a = dot(&basis[k], &w).re;
        alphas.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = norm(&w);
        let m = alphas.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imax, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let resid = (beta * eig.eigenvectors[(m - 1, imax)]).abs();
        best = best.max(theta.max(0.0).sqrt());
        history.push(best);
        upper = (theta.max(0.0) + resid).sqrt();
        let scale = theta.abs().max(1e-300);
        if beta <= 1e-13 * scale {
            upper = best;
            break;
        }
        if upper > 0.0 && (upper - best) / upper <= gap_target {
            break;
        }
        betas.push(beta);
        basis.push(w.into_iter().map(|x| x / beta).collect());
    }
    let upper = upper.max(best);
    NormEstimate {
        lower: best,
        upper,
        converged: upper == 0.0 || (upper - best) / upper <= 0.05,
        history,
    }
}

/// Least-squares line `y ≈ slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanczos_on_diagonal() {
        let d: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.1).collect();
        let est = lanczos_norm(
            |v| v.iter().zip(&d).map(|(x, s)| x * s).collect(),
            50,
            50,
            7,
            1e-10,
        );
        assert!((est.lower - 5.9f64.sqrt()).abs() < 1e-8, "{est:?}");
        assert!(est.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(est.lower <= est.upper);
    }

    #[test]
    fn line_fit_exact() {
        let f = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.r_squared - 1.0).abs() < 1e-14);
    }
}
