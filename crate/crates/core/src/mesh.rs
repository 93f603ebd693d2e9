//! Panel meshes aligned with coefficient breakpoints, and sampled functions on them.

use crate::quad::GaussRule;
use num_complex::Complex64 as C64;
use std::sync::Arc;

/// Gauss–Legendre panels covering `[edges[0], edges[P]]`.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub order: usize,
    pub edges: Vec<f64>,
    /// Nodes, panel-major.
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Mesh {
    /// Panels between consecutive knots, each knot interval split so no panel is
    /// longer than `max_len(a, b)`.
    pub fn build<F: Fn(f64, f64) -> f64>(knots: &[f64], order: usize, max_len: F) -> Mesh {
        let mut ks: Vec<f64> = knots.iter().copied().filter(|k| k.is_finite()).collect();
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ks.dedup();
        assert!(ks.len() >= 2, "mesh needs two distinct knots");
        let mut edges = vec![ks[0]];
        for w in ks.windows(2) {
            let len = w[1] - w[0];
            let m = (len / max_len(w[0], w[1]).max(1e-12)).ceil().max(1.0) as usize;
            for k in 1..=m {
                edges.push(if k == m { w[1] } else { w[0] + len * k as f64 / m as f64 });
            }
        }
        Self::from_edges(edges, order)
    }

    pub fn from_edges(edges: Vec<f64>, order: usize) -> Mesh {
        let rule = GaussRule::get(order);
        let mut x = Vec::with_capacity((edges.len() - 1) * order);
        let mut w = Vec::with_capacity(x.capacity());
        for e in edges.windows(2) {
            let (xs, ws) = rule.mapped(e[0], e[1]);
            x.extend(xs);
            w.extend(ws);
        }
        Mesh { order, edges, x, w }
    }

    pub fn uniform(a: f64, b: f64, panels: usize, order: usize) -> Mesh {
        let edges = (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect();
        Self::from_edges(edges, order)
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn rule(&self) -> &'static GaussRule {
        GaussRule::get(self.order)
    }

    pub fn range(&self, p: usize) -> std::ops::Range<usize> {
        p * self.order..(p + 1) * self.order
    }

    pub fn panel_len(&self, p: usize) -> f64 {
        self.edges[p + 1] - self.edges[p]
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Index of the edge equal to `x`, if any.
    pub fn edge_index(&self, x: f64) -> Option<usize> {
        self.edges.iter().position(|&e| e == x)
    }

    /// Value at `t ∈ [a_p, b_p]` of the polynomial interpolating `vals` on panel `p`.
    pub fn interp(&self, p: usize, vals: &[C64], t: f64) -> C64 {
        let rule = self.rule();
        let (a, b) = (self.edges[p], self.edges[p + 1]);
        let s = (2.0 * t - a - b) / (b - a);
        barycentric(rule, vals, s)
    }

    /// Spectral derivative of the panel samples.
    pub fn diff(&self, p: usize, vals: &[C64]) -> Vec<C64> {
        let rule = self.rule();
        let sc = 2.0 / self.panel_len(p);
        (0..self.order)
            .map(|i| (0..self.order).map(|j| vals[j] * rule.diff[i][j]).sum::<C64>() * sc)
            .collect()
    }
}

fn barycentric(rule: &GaussRule, vals: &[C64], s: f64) -> C64 {
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for j in 0..rule.n {
        let d = s - rule.nodes[j];
        if d == 0.0 {
            return vals[j];
        }
        let lam = if j % 2 == 0 { 1.0 } else { -1.0 } * ((1.0 - rule.nodes[j].powi(2)) * rule.weights[j]).sqrt();
        num += vals[j] * (lam / d);
        den += lam / d;
    }
    num / den
}

/// A complex function `u` and its quasi-derivative `p = hαu' + ibu` sampled on a mesh.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub mesh: Arc<Mesh>,
    pub u: Vec<C64>,
    pub p: Vec<C64>,
}

impl GridFunction {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.len();
        GridFunction {
            mesh,
            u: vec![C64::new(0.0, 0.0); n],
            p: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// Left (`panel = edge - 1`) or right (`panel = edge`) limit of `(u, p)` at an edge.
    pub fn edge_value(&self, edge: usize, from_right: bool) -> (C64, C64) {
        let p = if from_right { edge } else { edge - 1 };
        let r = self.mesh.range(p);
        let x = self.mesh.edges[edge];
        (
            self.mesh.interp(p, &self.u[r.clone()], x),
            self.mesh.interp(p, &self.p[r], x),
        )
    }

    pub fn same_mesh(&self, o: &GridFunction) -> bool {
        Arc::ptr_eq(&self.mesh, &o.mesh) || (self.mesh.edges == o.mesh.edges && self.mesh.order == o.mesh.order)
    }

    /// `∫ |u|^2 dx` over the mesh.
    pub fn l2_sq(&self) -> f64 {
        self.u.iter().zip(&self.mesh.w).map(|(u, w)| w * u.norm_sqr()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_respects_knots() {
        let m = Mesh::build(&[-1.0, 0.3, 2.0], 8, |_, _| 0.5);
        assert!(m.edges.contains(&0.3));
        assert!(m.edges.windows(2).all(|e| e[1] - e[0] <= 0.5 + 1e-12));
        let total: f64 = m.w.iter().sum();
        assert!((total - 3.0).abs() < 1e-13);
    }

    #[test]
    fn interpolation_to_edges() {
        let m = Mesh::uniform(0.0, 1.0, 2, 12);
        let vals: Vec<C64> = m.x[..12].iter().map(|&x| C64::new(x.exp(), 0.0)).collect();
        let v = m.interp(0, &vals, 0.0);
        assert!((v.re - 1.0).abs() < 1e-12);
        let d = m.diff(0, &vals);
        assert!((d[3].re - m.x[3].exp()).abs() < 1e-10);
    }
}
