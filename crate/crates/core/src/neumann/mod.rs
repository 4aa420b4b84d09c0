//! The degenerate `p(.)`-Laplacian Neumann problem
//!
//! ```text
//! div(|sqrt(Q) grad u|^{p-2} Q grad u) = |f|^{p-2} f v^p   in E,
//! n . Q grad u = 0                                          on the boundary,
//! ```
//!
//! in weak form `T(u) = Gamma_f` over mean-zero pairs, its energy, a solver,
//! and numerical probes of the operator properties used for existence.

mod diagnostics;
mod mesh;
mod solver;

pub use diagnostics::{
    coercivity_check, hemicontinuity_check, monotonicity_check, regularity_check,
    ChainStep, CoercivityReport, HemicontinuityReport, MonotonicityReport, RegularityReport,
};
pub use solver::{solve, SolverOptions, SolverReport};

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, integrate, Grid, ScalarField};
use crate::mweight::{eigendecompose, MatrixField};
use crate::sobolev::SobolevPair;
use crate::vxnorm::{conjugate, luxemburg_norm, weighted_norm, ExponentField};

/// Data `(p, v, Q, f)` of one Neumann problem.
#[derive(Clone, Debug)]
pub struct ProblemData {
    p: ExponentField,
    v: ScalarField,
    q: MatrixField,
    f: ScalarField,
}

impl ProblemData {
    pub fn new(p: ExponentField, v: ScalarField, q: MatrixField, f: ScalarField) -> Result<Self> {
        let grid = *p.grid();
        grid.check_same(v.grid(), "ProblemData weight")?;
        grid.check_same(q.grid(), "ProblemData matrix")?;
        grid.check_same(f.grid(), "ProblemData datum")?;
        p.ensure_solver_admissible()?;
        if let Some(i) = v.values().iter().position(|&x| x < 0.0) {
            return Err(Error::Validation(format!("weight is negative at cell {i}")));
        }
        let mass = integrate(&v);
        if mass <= 0.0 {
            return Err(Error::DegenerateWeight(mass));
        }
        eigendecompose(&q)?;
        let one = ScalarField::constant(grid, 1.0);
        if !weighted_norm(&one, &v, &p)?.is_finite() {
            return Err(Error::NumericalRange("||v||_p overflowed".into()));
        }
        let data = Self { p, v, q, f };
        if !data.datum_coefficients().iter().all(|c| c.is_finite()) {
            return Err(Error::NumericalRange(
                "|f|^(p-1) v^p overflowed".into(),
            ));
        }
        Ok(data)
    }

    /// The same `(p, v, Q)` with another datum.
    pub fn with_datum(&self, f: ScalarField) -> Result<Self> {
        Self::new(self.p.clone(), self.v.clone(), self.q.clone(), f)
    }

    pub fn grid(&self) -> &Grid {
        self.p.grid()
    }

    pub fn p(&self) -> &ExponentField {
        &self.p
    }

    pub fn v(&self) -> &ScalarField {
        &self.v
    }

    pub fn q(&self) -> &MatrixField {
        &self.q
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    /// `||f||_{L^p(v)}`.
    pub fn datum_norm(&self) -> Result<f64> {
        weighted_norm(&self.f, &self.v, &self.p)
    }

    /// `|| |f v|^{p-1} ||_{p'}`.
    pub fn datum_power_norm(&self) -> Result<f64> {
        let powered = ScalarField::new(
            *self.grid(),
            self.f
                .values()
                .iter()
                .zip(self.v.values())
                .zip(self.p.values())
                .map(|((&f, &v), &p)| (f * v).abs().powf(p - 1.0))
                .collect(),
        )?;
        luxemburg_norm(&powered, &conjugate(&self.p))
    }

    /// `|f|^{p-2} f v^p` per cell, with `0^{p-2} 0 = 0`.
    pub(crate) fn datum_coefficients(&self) -> Vec<f64> {
        self.f
            .values()
            .iter()
            .zip(self.v.values())
            .zip(self.p.values())
            .map(|((&f, &v), &p)| {
                if f == 0.0 || v == 0.0 {
                    0.0
                } else {
                    f.signum() * f.abs().powf(p - 1.0) * v.powf(p)
                }
            })
            .collect()
    }
}

/// `<Gamma_f, w> = -int |f|^{p-2} f w v^p`.
pub fn gamma_functional(data: &ProblemData, w: &SobolevPair) -> Result<f64> {
    data.grid().check_same(w.u.grid(), "gamma_functional")?;
    let vol = data.grid().cell_volume();
    let b = data.datum_coefficients();
    Ok(-compensated_sum(
        b.iter().zip(w.u.values()).map(|(c, x)| c * x * vol),
    ))
}

/// `<T(u), w> = int |sqrt(Q) g|^{p-2} h^T Q g` with `g` from `u`, `h` from `w`.
pub fn t_pairing(u: &SobolevPair, w: &SobolevPair, data: &ProblemData) -> Result<f64> {
    t_pairing_regularized(u, w, data, 0.0)
}

/// [`t_pairing`] with `|sqrt(Q) g|^2` replaced by `|sqrt(Q) g|^2 + eps^2` in
/// the coefficient; the directional derivative of [`energy`].
pub fn t_pairing_regularized(
    u: &SobolevPair,
    w: &SobolevPair,
    data: &ProblemData,
    eps: f64,
) -> Result<f64> {
    let grid = data.grid();
    grid.check_same(u.g.grid(), "t_pairing")?;
    grid.check_same(w.g.grid(), "t_pairing")?;
    let n = grid.dim();
    let vol = grid.cell_volume();
    let q = data.q();
    let terms = (0..grid.len()).map(|c| {
        let g = u.g.at(c);
        let h = w.g.at(c);
        let m = q.at(c);
        let s2 = crate::mweight::quad_form(m, n, g, g).max(0.0);
        let a = flux_coefficient(s2, eps, data.p.at(c));
        if a == 0.0 {
            0.0
        } else {
            a * crate::mweight::quad_form(m, n, h, g) * vol
        }
    });
    Ok(compensated_sum(terms))
}

/// `J_eps(u) = int (1/p) (|sqrt(Q) g|^2 + eps^2)^{p/2} + int |f|^{p-2} f u v^p`.
pub fn energy(u: &SobolevPair, data: &ProblemData, eps: f64) -> Result<f64> {
    if eps < 0.0 || eps.is_nan() {
        return Err(Error::Domain(format!("eps = {eps} must be non-negative")));
    }
    let grid = data.grid();
    grid.check_same(u.g.grid(), "energy")?;
    let vol = grid.cell_volume();
    let b = data.datum_coefficients();
    let terms = (0..grid.len()).flat_map(|c| {
        let g = u.g.at(c);
        let s2 = data.q.quad_form(c, g, g).max(0.0);
        let p = data.p.at(c);
        [
            (s2 + eps * eps).powf(0.5 * p) / p * vol,
            b[c] * u.u.values()[c] * vol,
        ]
    });
    Ok(compensated_sum(terms))
}

/// `(s2 + eps^2)^{(p-2)/2}`, or 0 when the flux vanishes.
pub(crate) fn flux_coefficient(s2: f64, eps: f64, p: f64) -> f64 {
    let r = s2 + eps * eps;
    if r == 0.0 {
        0.0
    } else {
        r.powf(0.5 * (p - 2.0))
    }
}
