//! Uniform cell-centered grids on boxes in one or two dimensions, the
//! scalar and vector fields that live on them, midpoint quadrature and
//! finite-difference gradients.
//!
//! Cells are traversed lexicographically: for a 2D grid with resolution
//! `(m0, m1)` the cell `(i, j)` has index `i * m1 + j`. Every reduction in the
//! crate walks cells in this order, so results are reproducible bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lower: [f64; MAX_DIM],
    upper: [f64; MAX_DIM],
    cells: [usize; MAX_DIM],
}

/// Builds a grid from per-axis intervals `[a_i, b_i]` and cell counts `m_i`.
pub fn build_grid(extents: &[(f64, f64)], resolution: &[usize]) -> Result<Grid> {
    let dim = extents.len();
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Config(format!(
            "grid dimension must be 1 or 2, got {dim}"
        )));
    }
    if resolution.len() != dim {
        return Err(Error::Config(format!(
            "{} extents but {} resolutions",
            dim,
            resolution.len()
        )));
    }
    let mut lower = [0.0; MAX_DIM];
    let mut upper = [1.0; MAX_DIM];
    let mut cells = [1; MAX_DIM];
    for axis in 0..dim {
        let (a, b) = extents[axis];
        if !a.is_finite() || !b.is_finite() || b <= a {
            return Err(Error::Config(format!(
                "axis {axis}: extent [{a}, {b}] must satisfy a < b"
            )));
        }
        if resolution[axis] < 2 {
            return Err(Error::Config(format!(
                "axis {axis}: resolution {} is below the minimum of 2",
                resolution[axis]
            )));
        }
        lower[axis] = a;
        upper[axis] = b;
        cells[axis] = resolution[axis];
    }
    Ok(Grid {
        dim,
        lower,
        upper,
        cells,
    })
}

impl Grid {
    /// The unit interval split into `m` cells.
    pub fn unit_interval(m: usize) -> Result<Grid> {
        build_grid(&[(0.0, 1.0)], &[m])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolution(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        (self.lower[axis], self.upper[axis])
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.cells[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Lebesgue measure of the box.
    pub fn measure(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.upper[a] - self.lower[a])
            .product()
    }

    /// Per-axis cell multi-index of a flat index.
    pub fn multi_index(&self, index: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [index, 0],
            _ => [index / self.cells[1], index % self.cells[1]],
        }
    }

    pub fn flat_index(&self, multi: [usize; MAX_DIM]) -> usize {
        match self.dim {
            1 => multi[0],
            _ => multi[0] * self.cells[1] + multi[1],
        }
    }

    /// Cell-center coordinates; unused trailing components are zero.
    pub fn center(&self, index: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(index);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.lower[axis] + (mi[axis] as f64 + 0.5) * self.spacing(axis);
        }
        x
    }

    /// Cell centers in traversal order.
    pub fn centers(&self) -> impl Iterator<Item = [f64; MAX_DIM]> + '_ {
        (0..self.len()).map(move |i| self.center(i))
    }

    /// Flat-index stride between neighbours along `axis`.
    pub(crate) fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.cells[1]
        } else {
            1
        }
    }

    pub(crate) fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Shape(format!("{what}: fields live on different grids")))
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// A real value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "scalar field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "scalar field value at cell {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Constructs without the finiteness scan. Callers guarantee the length.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.centers().map(|x| f(&x[..grid.dim()])).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&x| f(x)).collect())
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid, "zip_with")?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|x| x + c)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + c * b)
    }

    pub fn mul(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&x| x == 0.0)
    }
}

/// An `R^dim` value per cell, stored cell-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.dim() {
            return Err(Error::Shape(format!(
                "vector field has {} components for {} cells of dimension {}",
                values.len(),
                grid.len(),
                grid.dim()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "vector field component {} of cell {} is not finite",
                i % grid.dim(),
                i / grid.dim()
            )));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * grid.dim());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len() * grid.dim()])
    }

    /// The same vector in every cell.
    pub fn constant(grid: Grid, v: &[f64]) -> Result<Self> {
        if v.len() != grid.dim() {
            return Err(Error::Shape(format!(
                "constant vector has {} components, grid dimension is {}",
                v.len(),
                grid.dim()
            )));
        }
        Self::new(grid, v.repeat(grid.len()))
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * grid.dim());
        for x in grid.centers() {
            let v = f(&x[..grid.dim()]);
            if v.len() != grid.dim() {
                return Err(Error::Shape(format!(
                    "vector function returned {} components, expected {}",
                    v.len(),
                    grid.dim()
                )));
            }
            values.extend(v);
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The vector stored at cell `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[i * d..(i + 1) * d]
    }

    /// Component `axis` of every cell.
    pub fn component(&self, axis: usize) -> ScalarField {
        let d = self.grid.dim();
        ScalarField::from_raw(
            self.grid,
            self.values.iter().skip(axis).step_by(d).copied().collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&x| c * x).collect())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &VectorField) -> Result<Self> {
        self.grid.check_same(&other.grid, "axpy")?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + c * b)
                .collect(),
        ))
    }

    /// Euclidean length per cell.
    pub fn magnitude(&self) -> ScalarField {
        ScalarField::from_raw(
            self.grid,
            (0..self.grid.len())
                .map(|i| self.at(i).iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&x| x == 0.0)
    }
}

/// Midpoint-rule integral over the grid, summed in traversal order.
pub fn integrate(f: &ScalarField) -> f64 {
    let vol = f.grid.cell_volume();
    compensated_sum(f.values.iter().map(|&x| x * vol))
}

/// Finite-difference gradient: central differences in the interior and
/// second-order one-sided stencils on the first and last cell of each line.
/// Lines of only two cells fall back to the forward difference.
pub fn gradient(u: &ScalarField) -> VectorField {
    let grid = *u.grid();
    let dim = grid.dim();
    let mut out = vec![0.0; grid.len() * dim];
    for axis in 0..dim {
        for_each_line(&grid, axis, |cells, h| {
            let m = cells.len();
            let at = |k: usize| u.values[cells[k]];
            for k in 0..m {
                out[cells[k] * dim + axis] = stencil(m, k)
                    .iter()
                    .map(|&(off, c)| c * at(off))
                    .sum::<f64>()
                    / h;
            }
        });
    }
    VectorField::from_raw(grid, out)
}

/// Adjoint of [`gradient`] with respect to the Euclidean inner products on
/// cell values: `sum_i grad(u)_i . w_i == sum_j u_j * gradient_adjoint(w)_j`.
pub fn gradient_adjoint(w: &VectorField) -> ScalarField {
    let grid = *w.grid();
    let dim = grid.dim();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..dim {
        for_each_line(&grid, axis, |cells, h| {
            let m = cells.len();
            for k in 0..m {
                let wk = w.values[cells[k] * dim + axis] / h;
                for &(off, c) in stencil(m, k).iter() {
                    out[cells[off]] += c * wk;
                }
            }
        });
    }
    ScalarField::from_raw(grid, out)
}

/// Stencil `(line position, coefficient)` for cell `k` on a line of `m`
/// cells, to be divided by the spacing.
fn stencil(m: usize, k: usize) -> Stencil {
    if m == 2 {
        return Stencil::new(&[(0, -1.0), (1, 1.0)]);
    }
    if k == 0 {
        Stencil::new(&[(0, -1.5), (1, 2.0), (2, -0.5)])
    } else if k == m - 1 {
        Stencil::new(&[(m - 3, 0.5), (m - 2, -2.0), (m - 1, 1.5)])
    } else {
        Stencil::new(&[(k - 1, -0.5), (k + 1, 0.5)])
    }
}

#[derive(Clone, Copy)]
struct Stencil {
    taps: [(usize, f64); 3],
    len: usize,
}

impl Stencil {
    fn new(taps: &[(usize, f64)]) -> Self {
        let mut s = Stencil {
            taps: [(0, 0.0); 3],
            len: taps.len(),
        };
        s.taps[..taps.len()].copy_from_slice(taps);
        s
    }

    fn iter(&self) -> impl Iterator<Item = &(usize, f64)> {
        self.taps[..self.len].iter()
    }
}

fn for_each_line(grid: &Grid, axis: usize, mut visit: impl FnMut(&[usize], f64)) {
    let m = grid.resolution()[axis];
    let h = grid.spacing(axis);
    let stride = grid.stride(axis);
    let lines = grid.len() / m;
    let mut cells = vec![0usize; m];
    for line in 0..lines {
        // Start cell of this line: for axis 0 in 2D the lines are indexed by j,
        // otherwise by the slow index.
        let start = if grid.dim() == 2 && axis == 0 {
            line
        } else {
            line * m
        };
        for (k, c) in cells.iter_mut().enumerate() {
            *c = start + k * stride;
        }
        visit(&cells, h);
    }
}

/// `integrate(f v) / integrate(v)`.
pub fn weighted_average(f: &ScalarField, v: &ScalarField) -> Result<f64> {
    f.grid.check_same(&v.grid, "weighted_average")?;
    if let Some(i) = v.values.iter().position(|&x| x < 0.0) {
        return Err(Error::Validation(format!(
            "weight is negative at cell {i}"
        )));
    }
    let mass = integrate(v);
    if mass <= 0.0 {
        return Err(Error::DegenerateWeight(mass));
    }
    let vol = f.grid.cell_volume();
    let num = compensated_sum(f.values.iter().zip(&v.values).map(|(a, b)| a * b * vol));
    Ok(num / mass)
}

/// Unweighted average `f_E`.
pub fn average(f: &ScalarField) -> f64 {
    integrate(f) / f.grid.measure()
}
