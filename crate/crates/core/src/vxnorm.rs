//! Exponent fields, the modular, the Luxemburg norm and the inequalities
//! that tie them together.
//!
//! An exponent of `f64::INFINITY` marks a cell of the infinity set. Such
//! cells contribute the discrete essential supremum `max |f|` to the modular
//! instead of `|f|^p * vol`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{integrate, CompensatedSum, Grid, ScalarField};

/// Relative width at which the Luxemburg bisection stops.
pub const NORM_REL_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;
const MAX_BRACKET_STEPS: usize = 60;

/// The Hölder constant used throughout: `K_{p(.)} <= 4`.
pub const HOLDER_CONSTANT: f64 = 4.0;

/// Relative slack granted to every inequality check.
pub const CHECK_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ExponentField {
    grid: Grid,
    values: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
    infinite_cells: usize,
}

impl ExponentField {
    /// Every value must be a finite number `>= 1` or `f64::INFINITY`.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "exponent field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        let mut p_minus = f64::INFINITY;
        let mut p_plus = f64::NEG_INFINITY;
        let mut infinite_cells = 0;
        for (i, &p) in values.iter().enumerate() {
            if p.is_nan() || p < 1.0 {
                return Err(Error::Validation(format!(
                    "exponent {p} at cell {i} is below 1"
                )));
            }
            if p == f64::INFINITY {
                infinite_cells += 1;
            } else {
                p_minus = p_minus.min(p);
                p_plus = p_plus.max(p);
            }
        }
        if infinite_cells == values.len() {
            p_minus = f64::INFINITY;
            p_plus = f64::INFINITY;
        }
        Ok(Self {
            grid,
            values,
            p_minus,
            p_plus,
            infinite_cells,
        })
    }

    pub fn constant(grid: Grid, p: f64) -> Result<Self> {
        Self::new(grid, vec![p; grid.len()])
    }

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

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Minimum over the finite cells.
    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    /// Maximum over the finite cells.
    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn has_infinite_cells(&self) -> bool {
        self.infinite_cells > 0
    }

    pub fn is_constant(&self) -> bool {
        !self.has_infinite_cells() && self.p_minus == self.p_plus
    }

    /// `1 < p_- <= p_+ < inf` with no infinity cells.
    pub fn ensure_solver_admissible(&self) -> Result<()> {
        if self.has_infinite_cells() {
            return Err(Error::Validation(format!(
                "exponent is infinite on {} cells; p_+ must be finite",
                self.infinite_cells
            )));
        }
        if self.p_minus <= 1.0 {
            return Err(Error::Validation(format!(
                "p_- = {} must exceed 1",
                self.p_minus
            )));
        }
        Ok(())
    }

    /// The exponent as a plain scalar field. Fails on infinity cells.
    pub fn to_scalar_field(&self) -> Result<ScalarField> {
        ScalarField::new(self.grid, self.values.clone())
    }
}

/// The branch exponents. `p_star`/`r_star` select between `p_-` and `p_+`
/// from the gradient and datum norms; `l_star`/`b_star` are the power-norm
/// exponents of the same gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtremalExponents {
    pub p_star: f64,
    pub r_star: f64,
    pub l_star: f64,
    pub b_star: f64,
}

impl ExtremalExponents {
    pub fn from_norms(p: &ExponentField, gradient_norm: f64, datum_norm: f64) -> Self {
        let (lo, hi) = (p.p_minus(), p.p_plus());
        Self {
            p_star: if gradient_norm < 1.0 { hi } else { lo },
            r_star: if datum_norm >= 1.0 { hi } else { lo },
            l_star: l_star(gradient_norm, lo, hi),
            b_star: b_star(gradient_norm, lo, hi),
        }
    }

    /// `(r_* - 1) / (p_* - 1)`, the power of the datum norm in the regularity bound.
    pub fn regularity_power(&self) -> f64 {
        (self.r_star - 1.0) / (self.p_star - 1.0)
    }
}

/// Lower power-norm exponent: `p_+` below norm 1, `p_-` at or above.
pub fn l_star(norm: f64, p_minus: f64, p_plus: f64) -> f64 {
    if norm < 1.0 {
        p_plus
    } else {
        p_minus
    }
}

/// Upper power-norm exponent: `p_-` below norm 1, `p_+` at or above.
pub fn b_star(norm: f64, p_minus: f64, p_plus: f64) -> f64 {
    if norm < 1.0 {
        p_minus
    } else {
        p_plus
    }
}

/// `rho(f) = sum_{finite} |f|^p vol + max_{inf cells} |f|`. Saturates to
/// `+inf` when a term overflows.
pub fn modular(f: &ScalarField, p: &ExponentField) -> Result<f64> {
    f.grid().check_same(p.grid(), "modular")?;
    Ok(scaled_modular(f.values(), p, 1.0))
}

/// `rho(f * scale)` without materialising the scaled field.
pub(crate) fn scaled_modular(values: &[f64], p: &ExponentField, scale: f64) -> f64 {
    let vol = p.grid().cell_volume();
    let mut acc = CompensatedSum::new();
    let mut sup: f64 = 0.0;
    for (&x, &e) in values.iter().zip(p.values()) {
        let a = (x * scale).abs();
        if e == f64::INFINITY {
            sup = sup.max(a);
        } else if a > 0.0 {
            let t = a.powf(e) * vol;
            if !t.is_finite() {
                return f64::INFINITY;
            }
            acc.add(t);
        }
    }
    let total = acc.value() + sup;
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// The Luxemburg norm `inf { mu > 0 : rho(f / mu) <= 1 }`.
///
/// `mu -> rho(f / mu)` is continuous and strictly decreasing for nonzero `f`,
/// so the root of `rho(f / mu) = 1` is bracketed geometrically and bisected.
pub fn luxemburg_norm(f: &ScalarField, p: &ExponentField) -> Result<f64> {
    f.grid().check_same(p.grid(), "luxemburg_norm")?;
    luxemburg_of_values(f.values(), p)
}

pub(crate) fn luxemburg_of_values(values: &[f64], p: &ExponentField) -> Result<f64> {
    let sup = values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if sup == 0.0 {
        return Ok(0.0);
    }
    let too_big = |mu: f64| scaled_modular(values, p, 1.0 / mu) > 1.0;

    let measure = p.grid().measure();
    let mut start = if p.p_minus().is_finite() {
        sup * measure.powf(1.0 / p.p_minus())
    } else {
        sup
    };
    if !(start.is_finite() && start > 0.0) {
        start = f64::MIN_POSITIVE.max(sup);
    }

    let (mut lo, mut hi);
    if too_big(start) {
        lo = start;
        hi = 2.0 * start;
        let mut steps = 0;
        while too_big(hi) {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
                return Err(Error::NumericalRange(format!(
                    "could not bracket the norm above {lo:e}"
                )));
            }
        }
    } else {
        hi = start;
        lo = 0.5 * start;
        let mut steps = 0;
        while !too_big(lo) {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps > MAX_BRACKET_STEPS || lo == 0.0 {
                return Err(Error::NumericalRange(format!(
                    "could not bracket the norm below {hi:e}"
                )));
            }
        }
    }

    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= NORM_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if too_big(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `||f||_{L^p(v)} = ||f v||_{L^p}`.
pub fn weighted_norm(f: &ScalarField, v: &ScalarField, p: &ExponentField) -> Result<f64> {
    if let Some(i) = v.values().iter().position(|&x| x < 0.0) {
        return Err(Error::Validation(format!("weight is negative at cell {i}")));
    }
    let fv = f.mul(v)?;
    luxemburg_norm(&fv, p)
}

/// Pointwise conjugate exponent `p / (p - 1)`, with `1 <-> inf`.
pub fn conjugate(p: &ExponentField) -> ExponentField {
    let values = p
        .values()
        .iter()
        .map(|&e| {
            if e == 1.0 {
                f64::INFINITY
            } else if e == f64::INFINITY {
                1.0
            } else {
                e / (e - 1.0)
            }
        })
        .collect();
    ExponentField::new(*p.grid(), values).expect("conjugate of a valid exponent is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderReport {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub ok: bool,
}

/// `int |f g| <= 4 ||f||_p ||g||_{p'}`.
pub fn holder_check(f: &ScalarField, g: &ScalarField, p: &ExponentField) -> Result<HolderReport> {
    holder_check_with_constant(f, g, p, HOLDER_CONSTANT)
}

/// Hölder check with an arbitrary constant, for falsification probes.
pub fn holder_check_with_constant(
    f: &ScalarField,
    g: &ScalarField,
    p: &ExponentField,
    constant: f64,
) -> Result<HolderReport> {
    let fg = f.zip_with(g, |a, b| (a * b).abs())?;
    let lhs = integrate(&fg);
    let rhs = constant * luxemburg_norm(f, p)? * luxemburg_norm(g, &conjugate(p))?;
    Ok(HolderReport {
        lhs,
        rhs,
        constant,
        ok: lhs <= rhs * (1.0 + CHECK_REL_TOL),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModNormReport {
    pub norm: f64,
    pub modular: f64,
    pub lower: f64,
    pub upper: f64,
    /// True when the `||f|| >= 1` branch applies.
    pub norm_at_least_one: bool,
    pub ok: bool,
}

/// `||f||^{p_-} <= rho(f) <= ||f||^{p_+}` for `||f|| >= 1`, with the
/// exponents swapped below 1.
pub fn mod_norm_bounds_check(f: &ScalarField, p: &ExponentField) -> Result<ModNormReport> {
    if p.has_infinite_cells() {
        return Err(Error::Domain(
            "the modular-norm bounds need an exponent without infinity cells".into(),
        ));
    }
    let norm = luxemburg_norm(f, p)?;
    let rho = modular(f, p)?;
    let ge = norm >= 1.0;
    let (lower, upper) = if ge {
        (norm.powf(p.p_minus()), norm.powf(p.p_plus()))
    } else {
        (norm.powf(p.p_plus()), norm.powf(p.p_minus()))
    };
    let ok = rho >= lower * (1.0 - CHECK_REL_TOL) && rho <= upper * (1.0 + CHECK_REL_TOL);
    Ok(ModNormReport {
        norm,
        modular: rho,
        lower,
        upper,
        norm_at_least_one: ge,
        ok,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerNormReport {
    pub norm: f64,
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
    pub l_star: f64,
    pub b_star: f64,
    pub ok: bool,
}

/// `||f||^{l_*-1} <= || |f|^{p-1} ||_{p'} <= ||f||^{b_*-1}`.
pub fn power_norm_check(f: &ScalarField, p: &ExponentField) -> Result<PowerNormReport> {
    p.ensure_solver_admissible()?;
    f.grid().check_same(p.grid(), "power_norm_check")?;
    let norm = luxemburg_norm(f, p)?;
    let powered = ScalarField::new(
        *f.grid(),
        f.values()
            .iter()
            .zip(p.values())
            .map(|(&x, &e)| x.abs().powf(e - 1.0))
            .collect(),
    )
    .map_err(|_| Error::NumericalRange("|f|^(p-1) overflowed".into()))?;
    let mid = luxemburg_norm(&powered, &conjugate(p))?;
    let ls = l_star(norm, p.p_minus(), p.p_plus());
    let bs = b_star(norm, p.p_minus(), p.p_plus());
    let lower = norm.powf(ls - 1.0);
    let upper = norm.powf(bs - 1.0);
    let ok = mid >= lower * (1.0 - CHECK_REL_TOL) && mid <= upper * (1.0 + CHECK_REL_TOL);
    Ok(PowerNormReport {
        norm,
        lower,
        mid,
        upper,
        l_star: ls,
        b_star: bs,
        ok,
    })
}
