//! Dual mesh on the cell centres, carrying the flux term of the energy.
//!
//! In 1D the elements are the segments between neighbouring centres. In 2D
//! every square of four neighbouring centres is split along its diagonal into
//! two triangles. Gradients are constant per element, and `p`, `Q` are the
//! averages of their vertex values.

use crate::grid::CompensatedSum;
use crate::mweight::quad_form;

use super::{flux_coefficient, ProblemData};

#[derive(Clone, Copy, Debug)]
struct Element {
    nodes: [usize; 3],
    /// Gradient contribution of each node: `grad = sum_k coef[k] u[nodes[k]]`.
    coef: [[f64; 2]; 3],
    len: usize,
    weight: f64,
    p: f64,
    q: [f64; 4],
}

#[derive(Clone, Debug)]
pub(crate) struct DualMesh {
    dim: usize,
    nodes: usize,
    elements: Vec<Element>,
}

impl DualMesh {
    pub(crate) fn new(data: &ProblemData) -> Self {
        let grid = *data.grid();
        let dim = grid.dim();
        let mut elements = Vec::new();
        if dim == 1 {
            let h = grid.spacing(0);
            for i in 0..grid.len() - 1 {
                elements.push(element(data, &[i, i + 1], &[[-1.0 / h, 0.0], [1.0 / h, 0.0]], h));
            }
        } else {
            let (hx, hy) = (grid.spacing(0), grid.spacing(1));
            let [m0, m1] = [grid.resolution()[0], grid.resolution()[1]];
            let at = |i: usize, j: usize| grid.flat_index([i, j]);
            let half = 0.5 * hx * hy;
            for i in 0..m0 - 1 {
                for j in 0..m1 - 1 {
                    let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
                    elements.push(element(
                        data,
                        &[a, b, c],
                        &[[-1.0 / hx, 0.0], [1.0 / hx, -1.0 / hy], [0.0, 1.0 / hy]],
                        half,
                    ));
                    elements.push(element(
                        data,
                        &[a, c, d],
                        &[[0.0, -1.0 / hy], [1.0 / hx, 0.0], [-1.0 / hx, 1.0 / hy]],
                        half,
                    ));
                }
            }
        }
        Self {
            dim,
            nodes: grid.len(),
            elements,
        }
    }

    fn gradient(&self, e: &Element, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..e.len {
            let x = u[e.nodes[k]];
            g[0] += e.coef[k][0] * x;
            g[1] += e.coef[k][1] * x;
        }
        g
    }

    /// `sum_e weight/p (|sqrt(Q) g|^2 + eps^2)^{p/2}`.
    pub(crate) fn flux_energy(&self, u: &[f64], eps: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for e in &self.elements {
            let g = self.gradient(e, u);
            let s2 = quad_form(&e.q, self.dim, &g, &g).max(0.0);
            acc.add(e.weight / e.p * (s2 + eps * eps).powf(0.5 * e.p));
        }
        acc.value()
    }

    /// Gradient of [`Self::flux_energy`] with respect to the node values,
    /// written into `out`.
    pub(crate) fn flux_gradient(&self, u: &[f64], eps: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for e in &self.elements {
            let g = self.gradient(e, u);
            let s2 = quad_form(&e.q, self.dim, &g, &g).max(0.0);
            let a = flux_coefficient(s2, eps, e.p);
            if a == 0.0 {
                continue;
            }
            let qg = mat_vec(&e.q, self.dim, &g);
            for k in 0..e.len {
                let c = e.coef[k];
                out[e.nodes[k]] += e.weight * a * (c[0] * qg[0] + c[1] * qg[1]);
            }
        }
    }

    pub(crate) fn nodes(&self) -> usize {
        self.nodes
    }
}

fn element(data: &ProblemData, nodes: &[usize], coefs: &[[f64; 2]], weight: f64) -> Element {
    let n = data.grid().dim();
    let k = nodes.len() as f64;
    let mut node_arr = [0usize; 3];
    node_arr[..nodes.len()].copy_from_slice(nodes);
    let mut coef = [[0.0; 2]; 3];
    coef[..coefs.len()].copy_from_slice(coefs);
    let p = nodes.iter().map(|&c| data.p().at(c)).sum::<f64>() / k;
    let mut q = [0.0; 4];
    for &c in nodes {
        for (slot, x) in q.iter_mut().zip(data.q().at(c)) {
            *slot += x / k;
        }
    }
    // Keep exact symmetry after averaging.
    if n == 2 {
        let s = 0.5 * (q[1] + q[2]);
        q[1] = s;
        q[2] = s;
    }
    Element {
        nodes: node_arr,
        coef,
        len: nodes.len(),
        weight,
        p,
        q,
    }
}

fn mat_vec(m: &[f64], n: usize, x: &[f64]) -> [f64; 2] {
    let mut y = [0.0; 2];
    for r in 0..n {
        for c in 0..n {
            y[r] += m[r * n + c] * x[c];
        }
    }
    y
}
