//! Discrete Sobolev pairs `(u, g)` and the mean-zero subspace.

use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, weighted_average, ScalarField, VectorField};
use crate::mweight::{lq_norm, MatrixField};
use crate::vxnorm::{weighted_norm, ExponentField};

/// Relative tolerance of the mean-zero test.
pub const MEAN_ZERO_TOL: f64 = 1e-10;

/// A function and an independent gradient surrogate on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SobolevPair {
    pub u: ScalarField,
    pub g: VectorField,
}

impl SobolevPair {
    pub fn new(u: ScalarField, g: VectorField) -> Result<Self> {
        u.grid().check_same(g.grid(), "SobolevPair")?;
        Ok(Self { u, g })
    }

    pub fn zeros(grid: crate::grid::Grid) -> Self {
        Self {
            u: ScalarField::zeros(grid),
            g: VectorField::zeros(grid),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            u: self.u.scale(c),
            g: self.g.scale(c),
        }
    }

    pub fn axpy(&self, c: f64, other: &SobolevPair) -> Result<Self> {
        Ok(Self {
            u: self.u.axpy(c, &other.u)?,
            g: self.g.axpy(c, &other.g)?,
        })
    }
}

/// `||u||_{L^p(v)} + ||g||_{L_Q^p}`.
pub fn sobolev_norm(
    w: &SobolevPair,
    v: &ScalarField,
    q: &MatrixField,
    p: &ExponentField,
) -> Result<f64> {
    Ok(weighted_norm(&w.u, v, p)? + lq_norm(&w.g, q, p)?)
}

/// `(u, gradient(u))`.
pub fn lift(u: &ScalarField) -> SobolevPair {
    SobolevPair {
        g: gradient(u),
        u: u.clone(),
    }
}

/// `(u - u_{E,v}, g)`.
pub fn mean_zero_project(w: &SobolevPair, v: &ScalarField) -> Result<SobolevPair> {
    let mean = weighted_average(&w.u, v)?;
    Ok(SobolevPair {
        u: w.u.shift(-mean),
        g: w.g.clone(),
    })
}

/// `|int u v| <= 1e-10 ||u||_{L^p(v)} |E|`, or `<= 1e-14` for `u = 0`.
pub fn is_mean_zero(u: &ScalarField, v: &ScalarField, p: &ExponentField) -> Result<bool> {
    let uv = u.mul(v)?;
    let moment = integrate(&uv).abs();
    if u.is_zero() {
        return Ok(moment <= 1e-14);
    }
    let scale = weighted_norm(u, v, p)? * u.grid().measure();
    if !scale.is_finite() {
        return Err(Error::NumericalRange("weighted norm overflowed".into()));
    }
    Ok(moment <= MEAN_ZERO_TOL * scale || moment <= 1e-14)
}
