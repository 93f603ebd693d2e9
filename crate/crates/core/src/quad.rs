//! Gauss–Legendre rules with spectral integration and differentiation matrices.

use std::sync::OnceLock;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug)]
pub struct GaussRule {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `integ[i][j] = ∫_{-1}^{t_i} ℓ_j`, the cumulative integration matrix.
    pub integ: Vec<Vec<f64>>,
    /// `diff[i][j] = ℓ_j'(t_i)`.
    pub diff: Vec<Vec<f64>>,
}

fn legendre_all(n: usize, t: f64) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = t;
    }
    for k in 1..n {
        p[k + 1] = ((2 * k + 1) as f64 * t * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    p
}

impl GaussRule {
    fn build(n: usize) -> GaussRule {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut t = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let p = legendre_all(n, t);
                let dp = n as f64 * (t * p[n] - p[n - 1]) / (t * t - 1.0);
                let dt = p[n] / dp;
                t -= dt;
                if dt.abs() < 1e-16 {
                    break;
                }
            }
            let p = legendre_all(n, t);
            let dp = n as f64 * (t * p[n] - p[n - 1]) / (t * t - 1.0);
            nodes[i] = t;
            weights[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
        let pj: Vec<Vec<f64>> = nodes.iter().map(|&t| legendre_all(n, t)).collect();
        let mut integ = vec![vec![0.0; n]; n];
        let mut diff = vec![vec![0.0; n]; n];
        for i in 0..n {
            let ti = nodes[i];
            let p = &pj[i];
            // ∫_{-1}^{t} P_k = (P_{k+1} - P_{k-1}) / (2k+1), k >= 1
            let mut ip = vec![0.0; n];
            ip[0] = ti + 1.0;
            for k in 1..n {
                ip[k] = (p[k + 1] - p[k - 1]) / (2 * k + 1) as f64;
            }
            let mut dpk = vec![0.0; n];
            for k in 1..n {
                dpk[k] = k as f64 * (ti * p[k] - p[k - 1]) / (ti * ti - 1.0);
            }
            for j in 0..n {
                let mut s = 0.0;
                let mut d = 0.0;
                for k in 0..n {
                    let c = (2 * k + 1) as f64 * 0.5 * pj[j][k];
                    s += c * ip[k];
                    d += c * dpk[k];
                }
                integ[i][j] = weights[j] * s;
                diff[i][j] = weights[j] * d;
            }
        }
        GaussRule {
            n,
            nodes,
            weights,
            integ,
            diff,
        }
    }

    /// Cached rule with `n` points, `1 <= n <= 64`.
    pub fn get(n: usize) -> &'static GaussRule {
        static CACHE: [OnceLock<GaussRule>; 65] = [const { OnceLock::new() }; 65];
        assert!((1..=64).contains(&n), "gauss rule size out of range");
        CACHE[n].get_or_init(|| GaussRule::build(n))
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        (
            self.nodes.iter().map(|t| m + h * t).collect(),
            self.weights.iter().map(|w| h * w).collect(),
        )
    }

    /// `∫_a^b f` by this rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(m + h * t))
            .sum::<f64>()
            * h
    }
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]` split at `breaks`.
pub fn composite<F: Fn(f64) -> f64>(a: f64, b: f64, breaks: &[f64], panels: usize, n: usize, f: F) -> f64 {
    let rule = GaussRule::get(n);
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut s = 0.0;
    for w in pts.windows(2) {
        let len = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let lo = w[0] + k as f64 * len;
            s += rule.integrate(lo, lo + len, &f);
        }
    }
    s
}
