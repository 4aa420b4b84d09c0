//! Symmetric positive semi-definite matrix weights `Q(x)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::vxnorm::{luxemburg_of_values, weighted_norm, ExponentField, CHECK_REL_TOL};

/// Eigenvalues down to `-PSD_TOL * max(1, lambda_max)` are clamped to zero.
pub const PSD_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 64;

/// One symmetric `n x n` matrix per cell, row-major, `n = grid.dim()`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    grid: Grid,
    entries: Vec<f64>,
}

impl MatrixField {
    pub fn new(grid: Grid, entries: Vec<f64>) -> Result<Self> {
        let n = grid.dim();
        if entries.len() != grid.len() * n * n {
            return Err(Error::Shape(format!(
                "matrix field has {} entries for {} cells of size {n}x{n}",
                entries.len(),
                grid.len()
            )));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "matrix entry {i} is not finite"
            )));
        }
        for (cell, m) in entries.chunks(n * n).enumerate() {
            for a in 0..n {
                for b in a + 1..n {
                    if m[a * n + b] != m[b * n + a] {
                        return Err(Error::Validation(format!(
                            "matrix at cell {cell} is not symmetric"
                        )));
                    }
                }
            }
        }
        Ok(Self { grid, entries })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut entries = Vec::with_capacity(grid.len() * grid.dim() * grid.dim());
        for x in grid.centers() {
            entries.extend(f(&x[..grid.dim()]));
        }
        Self::new(grid, entries)
    }

    /// `c * I` in every cell.
    pub fn scalar(grid: Grid, c: f64) -> Result<Self> {
        let n = grid.dim();
        let mut m = vec![0.0; n * n];
        for a in 0..n {
            m[a * n + a] = c;
        }
        Self::constant(grid, &m)
    }

    pub fn identity(grid: Grid) -> Self {
        Self::scalar(grid, 1.0).expect("identity is symmetric")
    }

    pub fn diagonal(grid: Grid, diag: &[f64]) -> Result<Self> {
        let n = grid.dim();
        if diag.len() != n {
            return Err(Error::Shape(format!(
                "diagonal has {} entries, grid dimension is {n}",
                diag.len()
            )));
        }
        let mut m = vec![0.0; n * n];
        for a in 0..n {
            m[a * n + a] = diag[a];
        }
        Self::constant(grid, &m)
    }

    pub fn constant(grid: Grid, matrix: &[f64]) -> Result<Self> {
        let n = grid.dim();
        if matrix.len() != n * n {
            return Err(Error::Shape(format!(
                "matrix has {} entries, expected {}",
                matrix.len(),
                n * n
            )));
        }
        Self::new(grid, matrix.repeat(grid.len()))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.dim()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// The row-major matrix of one cell.
    pub fn at(&self, cell: usize) -> &[f64] {
        let nn = self.n() * self.n();
        &self.entries[cell * nn..(cell + 1) * nn]
    }

    /// `a^T Q(cell) b`.
    pub fn quad_form(&self, cell: usize, a: &[f64], b: &[f64]) -> f64 {
        quad_form(self.at(cell), self.n(), a, b)
    }
}

pub(crate) fn quad_form(m: &[f64], n: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 0..n {
        let mut row = 0.0;
        for c in 0..n {
            row += m[r * n + c] * b[c];
        }
        s += a[r] * row;
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenData {
    grid: Grid,
    n: usize,
    values: Vec<f64>,
    vectors: Vec<f64>,
}

impl EigenData {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Descending, non-negative.
    pub fn eigenvalues(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n..(cell + 1) * self.n]
    }

    /// Unit eigenvector `j` of `cell`.
    pub fn eigenvector(&self, cell: usize, j: usize) -> &[f64] {
        let base = cell * self.n * self.n + j * self.n;
        &self.vectors[base..base + self.n]
    }

    pub fn max_eigenvalue(&self, cell: usize) -> f64 {
        self.values[cell * self.n]
    }
}

pub fn eigendecompose(q: &MatrixField) -> Result<EigenData> {
    let n = q.n();
    let mut values = Vec::with_capacity(q.grid.len() * n);
    let mut vectors = Vec::with_capacity(q.grid.len() * n * n);
    for cell in 0..q.grid.len() {
        let m = q.at(cell);
        for a in 0..n {
            for b in a + 1..n {
                if m[a * n + b] != m[b * n + a] {
                    return Err(Error::Validation(format!(
                        "matrix at cell {cell} is not symmetric"
                    )));
                }
            }
        }
        let (lam, vecs) = symmetric_eigen(m, n);
        let top = lam[0];
        let floor = -PSD_TOL * top.max(1.0);
        if lam[n - 1] < floor {
            return Err(Error::Validation(format!(
                "matrix at cell {cell} has eigenvalue {:e} below the PSD tolerance",
                lam[n - 1]
            )));
        }
        values.extend(lam.iter().map(|&l| l.max(0.0)));
        vectors.extend(vecs);
    }
    Ok(EigenData {
        grid: q.grid,
        n,
        values,
        vectors,
    })
}

/// Cyclic Jacobi on one symmetric matrix. Returns eigenvalues in descending
/// order and the matching unit eigenvectors, concatenated.
fn symmetric_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = m.to_vec();
    // Columns of `v` are eigenvectors.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|r| (0..n).filter(move |&c| c != r).map(move |c| (r, c)))
            .map(|(r, c)| a[r * n + c] * a[r * n + c])
            .sum();
        if off == 0.0 {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                if s == 0.0 {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                rotated = true;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let lam: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();

    // Within a cluster of equal eigenvalues any orthonormal basis is valid;
    // pick the one obtained by orthonormalising the axis vectors.
    let scale = lam[0].abs().max(1.0);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (lam[start] - lam[end]).abs() <= 1e-12 * scale {
            end += 1;
        }
        if end - start > 1 {
            let span: Vec<Vec<f64>> = vecs[start..end].to_vec();
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for axis in 0..n {
                if basis.len() == end - start {
                    break;
                }
                // Project the axis vector onto the eigenspace.
                let mut w = vec![0.0; n];
                for s in &span {
                    let c = s[axis];
                    for k in 0..n {
                        w[k] += c * s[k];
                    }
                }
                for b in &basis {
                    let d: f64 = (0..n).map(|k| w[k] * b[k]).sum();
                    for k in 0..n {
                        w[k] -= d * b[k];
                    }
                }
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    basis.push(w.iter().map(|x| x / norm).collect());
                }
            }
            for (slot, b) in vecs[start..end].iter_mut().zip(basis) {
                *slot = b;
            }
        }
        start = end;
    }

    for vec in &mut vecs {
        if let Some(&first) = vec.iter().find(|x| x.abs() > 1e-14) {
            if first < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    (lam, vecs.concat())
}

/// `sum_j sqrt(lambda_j) v_j v_j^T` per cell.
pub fn sqrt_field(q: &MatrixField) -> Result<MatrixField> {
    let eig = eigendecompose(q)?;
    let n = q.n();
    let mut entries = vec![0.0; q.entries.len()];
    for cell in 0..q.grid.len() {
        let out = &mut entries[cell * n * n..(cell + 1) * n * n];
        for j in 0..n {
            let r = eig.eigenvalues(cell)[j].sqrt();
            let vj = eig.eigenvector(cell, j);
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] += r * vj[a] * vj[b];
                }
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                let s = 0.5 * (out[a * n + b] + out[b * n + a]);
                out[a * n + b] = s;
                out[b * n + a] = s;
            }
        }
    }
    MatrixField::new(q.grid, entries)
}

/// Operator norm `|Q(x)|_op`, the largest eigenvalue.
pub fn gamma(q: &MatrixField) -> Result<ScalarField> {
    let eig = eigendecompose(q)?;
    Ok(ScalarField::from_raw(
        q.grid,
        (0..q.grid.len()).map(|c| eig.max_eigenvalue(c)).collect(),
    ))
}

/// Pointwise `|sqrt(Q) g| = sqrt(g^T Q g)`.
pub fn weighted_magnitude(g: &VectorField, q: &MatrixField) -> Result<ScalarField> {
    g.grid().check_same(q.grid(), "weighted_magnitude")?;
    let values = (0..g.grid().len())
        .map(|c| {
            let gi = g.at(c);
            q.quad_form(c, gi, gi).max(0.0).sqrt()
        })
        .collect();
    Ok(ScalarField::from_raw(*g.grid(), values))
}

/// `|| |sqrt(Q) g| ||_{L^p}`.
pub fn lq_norm(g: &VectorField, q: &MatrixField, p: &ExponentField) -> Result<f64> {
    q.grid().check_same(p.grid(), "lq_norm")?;
    let s = weighted_magnitude(g, q)?;
    luxemburg_of_values(s.values(), p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEquivalenceReport {
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
    /// `|| g.v_j ||_{L^p(lambda_j^{1/2})}` for each `j`.
    pub components: Vec<f64>,
    pub ok: bool,
}

/// `(1/n) sum_j ||f_j||_{L^p(lambda_j^{1/2})} <= ||g||_{L_Q} <= sum_j ||f_j||_{L^p(lambda_j^{1/2})}`
/// with `f_j = g . v_j`.
pub fn component_norm_equivalence_check(
    g: &VectorField,
    q: &MatrixField,
    p: &ExponentField,
) -> Result<NormEquivalenceReport> {
    g.grid().check_same(q.grid(), "component_norm_equivalence_check")?;
    let eig = eigendecompose(q)?;
    let n = q.n();
    let grid = *g.grid();
    let mut components = Vec::with_capacity(n);
    for j in 0..n {
        let mut fj = Vec::with_capacity(grid.len());
        let mut wj = Vec::with_capacity(grid.len());
        for c in 0..grid.len() {
            let vj = eig.eigenvector(c, j);
            fj.push(g.at(c).iter().zip(vj).map(|(a, b)| a * b).sum::<f64>());
            wj.push(eig.eigenvalues(c)[j].sqrt());
        }
        components.push(weighted_norm(
            &ScalarField::from_raw(grid, fj),
            &ScalarField::from_raw(grid, wj),
            p,
        )?);
    }
    let upper: f64 = components.iter().sum();
    let lower = upper / n as f64;
    let mid = lq_norm(g, q, p)?;
    let ok = mid >= lower * (1.0 - CHECK_REL_TOL) && mid <= upper * (1.0 + CHECK_REL_TOL);
    Ok(NormEquivalenceReport {
        lower,
        mid,
        upper,
        components,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn square(m: usize) -> Grid {
        build_grid(&[(0.0, 1.0), (0.0, 1.0)], &[m, m]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn rejects_asymmetric_matrices() {
        let grid = square(2);
        assert!(matches!(
            MatrixField::constant(grid, &[1.0, 0.5, 0.4, 1.0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn diagonal_decomposition() {
        let q = MatrixField::diagonal(square(2), &[4.0, 9.0]).unwrap();
        let e = eigendecompose(&q).unwrap();
        assert_eq!(e.eigenvalues(0), &[9.0, 4.0]);
        assert_eq!(e.eigenvector(0, 0), &[0.0, 1.0]);
        assert_eq!(e.eigenvector(0, 1), &[1.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let q = MatrixField::constant(square(2), &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = eigendecompose(&q).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(e.eigenvalues(3), &[3.0, 1.0], 1e-14));
        assert!(close(e.eigenvector(3, 0), &[r, r], 1e-14));
        assert!(close(e.eigenvector(3, 1), &[r, -r], 1e-14));
    }

    #[test]
    fn repeated_eigenvalues_use_axis_basis() {
        let q = MatrixField::scalar(square(2), 2.5).unwrap();
        let e = eigendecompose(&q).unwrap();
        assert_eq!(e.eigenvector(0, 0), &[1.0, 0.0]);
        assert_eq!(e.eigenvector(0, 1), &[0.0, 1.0]);
        let z = eigendecompose(&MatrixField::scalar(square(2), 0.0).unwrap()).unwrap();
        assert_eq!(z.eigenvalues(1), &[0.0, 0.0]);
    }

    #[test]
    fn tiny_negative_eigenvalues_are_clamped() {
        let q = MatrixField::diagonal(square(2), &[1.0, -1e-12]).unwrap();
        let e = eigendecompose(&q).unwrap();
        assert_eq!(e.eigenvalues(0), &[1.0, 0.0]);
        let bad = MatrixField::diagonal(square(2), &[1.0, -1e-6]).unwrap();
        assert!(matches!(sqrt_field(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn square_roots() {
        let d = sqrt_field(&MatrixField::diagonal(square(2), &[4.0, 9.0]).unwrap()).unwrap();
        assert!(close(d.at(0), &[2.0, 0.0, 0.0, 3.0], 1e-14));
        let z = sqrt_field(&MatrixField::scalar(square(2), 0.0).unwrap()).unwrap();
        assert!(z.entries().iter().all(|&x| x == 0.0));
        let s = sqrt_field(&MatrixField::constant(square(2), &[2.0, 1.0, 1.0, 2.0]).unwrap())
            .unwrap();
        let r3 = 3.0_f64.sqrt();
        let want = [(r3 + 1.0) / 2.0, (r3 - 1.0) / 2.0, (r3 - 1.0) / 2.0, (r3 + 1.0) / 2.0];
        assert!(close(s.at(2), &want, 1e-14));
    }

    #[test]
    fn gamma_examples() {
        let g = gamma(&MatrixField::diagonal(square(2), &[4.0, 9.0]).unwrap()).unwrap();
        assert!(g.values().iter().all(|&x| x == 9.0));
        let g = gamma(&MatrixField::constant(square(2), &[2.0, 1.0, 1.0, 2.0]).unwrap()).unwrap();
        assert!(g.values().iter().all(|&x| (x - 3.0).abs() < 1e-14));
        let g = gamma(&MatrixField::scalar(square(2), 0.7).unwrap()).unwrap();
        assert!(g.values().iter().all(|&x| x == 0.7));
    }

    #[test]
    fn lq_norm_examples() {
        let grid = square(4);
        let p = ExponentField::constant(grid, 2.0).unwrap();
        let g = VectorField::constant(grid, &[1.0, 0.0]).unwrap();
        let q = MatrixField::diagonal(grid, &[4.0, 1.0]).unwrap();
        assert!((lq_norm(&g, &q, &p).unwrap() - 2.0).abs() < 1e-11);
        let zero = MatrixField::scalar(grid, 0.0).unwrap();
        assert_eq!(lq_norm(&g, &zero, &p).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_equivalence_is_equality() {
        let grid = Grid::unit_interval(8).unwrap();
        let p = ExponentField::from_fn(grid, |x| 1.5 + x[0]).unwrap();
        let g = VectorField::from_fn(grid, |x| vec![x[0] - 0.3]).unwrap();
        let q = MatrixField::from_fn(grid, |x| vec![1.0 + x[0]]).unwrap();
        let r = component_norm_equivalence_check(&g, &q, &p).unwrap();
        assert!((r.lower - r.upper).abs() < 1e-12);
        assert!((r.mid - r.upper).abs() < 1e-10 * r.upper);
        assert!(r.ok);
    }

    #[test]
    fn axis_aligned_equivalence() {
        let grid = square(4);
        let p = ExponentField::constant(grid, 3.0).unwrap();
        let g = VectorField::from_fn(grid, |x| vec![x[0] + x[1], 0.0]).unwrap();
        let r = component_norm_equivalence_check(&g, &MatrixField::identity(grid), &p).unwrap();
        let g1 = crate::vxnorm::luxemburg_norm(&g.component(0), &p).unwrap();
        assert!((r.upper - g1).abs() < 1e-12 * g1);
        assert!((r.lower - 0.5 * g1).abs() < 1e-12 * g1);
        assert!((r.mid - g1).abs() < 1e-10 * g1);
    }
}
