//! Numerical probes of the regularity chain and of the operator properties
//! (monotone, hemicontinuous, almost coercive) behind existence.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{compensated_sum, Grid, ScalarField};
use crate::mweight::{lq_norm, quad_form};
use crate::sampling::{random_smooth_field, random_vector_field};
use crate::sobolev::{lift, mean_zero_project, sobolev_norm, SobolevPair};
use crate::vxnorm::{
    modular, weighted_norm, ExtremalExponents, CHECK_REL_TOL, HOLDER_CONSTANT,
};

use super::solver::SolverReport;
use super::{gamma_functional, t_pairing, ProblemData};

/// Relative slack for inequalities that use an estimated Poincaré constant.
pub const POINCARE_SLACK: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainStep {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl ChainStep {
    fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            ok: lhs <= rhs * (1.0 + slack) + f64::MIN_POSITIVE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub exponents: ExtremalExponents,
    pub u_norm: f64,
    pub g_norm: f64,
    pub f_norm: f64,
    /// `int |sqrt(Q) g|^p`.
    pub gradient_modular: f64,
    /// `|| |f v|^{p-1} ||_{p'}`.
    pub datum_power_norm: f64,
    pub c0: f64,
    pub steps: Vec<ChainStep>,
    pub c1_observed: Option<f64>,
    /// `C0 (4 C0)^{1/(p_- - 1)}`.
    pub c1_bound: f64,
    pub ok: bool,
}

/// Evaluates every inequality of the gradient bound and of the regularity
/// estimate `||u|| <= C0 (4 C0)^{1/(p_- - 1)} ||f||^{(r*-1)/(p*-1)}` on a
/// solver output.
pub fn regularity_check(
    report: &SolverReport,
    data: &ProblemData,
    c0: f64,
) -> Result<RegularityReport> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::Domain(format!("Poincaré constant {c0} must be positive")));
    }
    let p = data.p();
    let w = &report.solution;
    let u_norm = weighted_norm(&w.u, data.v(), p)?;
    let g_norm = lq_norm(&w.g, data.q(), p)?;
    let f_norm = data.datum_norm()?;
    let e = ExtremalExponents::from_norms(p, g_norm, f_norm);
    let s = crate::mweight::weighted_magnitude(&w.g, data.q())?;
    let rho = modular(&s, p)?;
    let pow = data.datum_power_norm()?;
    let k = HOLDER_CONSTANT;
    let power = e.regularity_power();
    let fpow = if f_norm == 0.0 { 0.0 } else { f_norm.powf(power) };

    let steps = vec![
        ChainStep::new("gradient_norm_le_modular", g_norm.powf(e.p_star), rho, CHECK_REL_TOL),
        ChainStep::new("modular_le_holder", rho, k * pow * u_norm, CHECK_REL_TOL),
        ChainStep::new("holder_le_poincare", k * pow * u_norm, k * c0 * pow * g_norm, POINCARE_SLACK),
        ChainStep::new(
            "power_norm_le_datum",
            pow,
            if f_norm == 0.0 { 0.0 } else { f_norm.powf(e.r_star - 1.0) },
            CHECK_REL_TOL,
        ),
        ChainStep::new(
            "gradient_bound",
            if g_norm == 0.0 { 0.0 } else { g_norm.powf(e.p_star - 1.0) },
            k * c0 * if f_norm == 0.0 { 0.0 } else { f_norm.powf(e.r_star - 1.0) },
            POINCARE_SLACK,
        ),
        ChainStep::new("poincare", u_norm, c0 * g_norm, POINCARE_SLACK),
        ChainStep::new(
            "regularity_p_star",
            u_norm,
            c0 * (k * c0).powf(1.0 / (e.p_star - 1.0)) * fpow,
            POINCARE_SLACK,
        ),
        ChainStep::new(
            "regularity_p_minus",
            u_norm,
            c0 * (k * c0).powf(1.0 / (p.p_minus() - 1.0)) * fpow,
            POINCARE_SLACK,
        ),
        ChainStep::new(
            "exponent_swap",
            (k * c0).powf(1.0 / (e.p_star - 1.0)),
            (k * c0).powf(1.0 / (p.p_minus() - 1.0)),
            CHECK_REL_TOL,
        ),
    ];
    let c1_observed = if data.f().is_zero() {
        None
    } else {
        Some(u_norm / f_norm.powf(power))
    };
    let ok = steps.iter().all(|s| s.ok);
    Ok(RegularityReport {
        exponents: e,
        u_norm,
        g_norm,
        f_norm,
        gradient_modular: rho,
        datum_power_norm: pow,
        c0,
        steps,
        c1_observed,
        c1_bound: c0 * (k * c0).powf(1.0 / (p.p_minus() - 1.0)),
        ok,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub trials: usize,
    /// Smallest `(<T(u) - T(w), u - w>) / scale` seen.
    pub worst_normalized: f64,
    pub violations: usize,
    pub ok: bool,
}

/// `<T(u) - T(w), u - w> >= -1e-12 scale` on random pairs, where
/// `scale = int (|s|^{p-1} + |r|^{p-1}) |s - r|`, `s = sqrt(Q) g`, `r = sqrt(Q) h`.
pub fn monotonicity_check<R: Rng>(
    data: &ProblemData,
    trials: usize,
    rng: &mut R,
) -> Result<MonotonicityReport> {
    let grid = *data.grid();
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for t in 0..trials {
        let a = random_pair(rng, &grid);
        let b = match t % 4 {
            0 => a.clone(),
            1 => a.axpy(1e-3, &random_pair(rng, &grid))?,
            _ => random_pair(rng, &grid),
        };
        let (value, scale) = monotone_gap(data, &a, &b)?;
        let normalized = if scale > 0.0 { value / scale } else { 0.0 };
        if value < -1e-12 * scale {
            violations += 1;
        }
        worst = worst.min(normalized);
    }
    Ok(MonotonicityReport {
        trials,
        worst_normalized: if trials == 0 { 0.0 } else { worst },
        violations,
        ok: violations == 0,
    })
}

fn random_pair<R: Rng>(rng: &mut R, grid: &Grid) -> SobolevPair {
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    SobolevPair {
        u: ScalarField::zeros(*grid),
        g: random_vector_field(rng, grid, scale),
    }
}

/// `(<T(a) - T(b), a - b>, scale)`, accumulated cell by cell.
pub(crate) fn monotone_gap(data: &ProblemData, a: &SobolevPair, b: &SobolevPair) -> Result<(f64, f64)> {
    let grid = data.grid();
    grid.check_same(a.g.grid(), "monotonicity")?;
    grid.check_same(b.g.grid(), "monotonicity")?;
    let n = grid.dim();
    let vol = grid.cell_volume();
    let mut value = Vec::with_capacity(grid.len());
    let mut scale = Vec::with_capacity(grid.len());
    for c in 0..grid.len() {
        let m = data.q().at(c);
        let p = data.p().at(c);
        let (g, h) = (a.g.at(c), b.g.at(c));
        let d: Vec<f64> = g.iter().zip(h).map(|(x, y)| x - y).collect();
        let sg = quad_form(m, n, g, g).max(0.0).sqrt();
        let sh = quad_form(m, n, h, h).max(0.0).sqrt();
        let sd = quad_form(m, n, &d, &d).max(0.0).sqrt();
        let ag = if sg > 0.0 { sg.powf(p - 2.0) } else { 0.0 };
        let ah = if sh > 0.0 { sh.powf(p - 2.0) } else { 0.0 };
        value.push((ag * quad_form(m, n, &d, g) - ah * quad_form(m, n, &d, h)) * vol);
        scale.push((sg.powf(p - 1.0) + sh.powf(p - 1.0)) * sd * vol);
    }
    Ok((compensated_sum(value), compensated_sum(scale)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HemicontinuityReport {
    pub y: f64,
    /// `(|z_k - y|, |phi(z_k) - phi(y)|)` for `z_k = y + 2^-k`.
    pub samples: Vec<(f64, f64)>,
    /// Log-log slope of the differences; `None` when the map is constant.
    pub fitted_exponent: Option<f64>,
    pub required_exponent: f64,
    /// Smallest `C` with `|phi(z_k) - phi(y)| <= C |z_k - y|^alpha`, `alpha = min(1, p_- - 1)`.
    pub modulus_constant: f64,
    pub monotone: bool,
    pub ok: bool,
}

/// Samples `phi(z) = <T(u + z w), w>` at `z_k = y + 2^-k` and fits the decay
/// of `|phi(z_k) - phi(y)|`.
pub fn hemicontinuity_check(
    data: &ProblemData,
    u: &SobolevPair,
    w: &SobolevPair,
    y: f64,
) -> Result<HemicontinuityReport> {
    const KS: std::ops::RangeInclusive<i32> = 1..=24;
    const FIT_FROM: i32 = 4;
    let phi = |z: f64| -> Result<f64> { t_pairing(&u.axpy(z, w)?, w, data) };
    let base = phi(y)?;
    let mut samples = Vec::new();
    for k in KS {
        let dz = 2f64.powi(-k);
        samples.push((dz, (phi(y + dz)? - base).abs()));
    }
    let alpha = (data.p().p_minus() - 1.0).min(1.0);
    let required = alpha - 0.1;
    let top = samples.iter().fold(base.abs(), |m, s| m.max(s.1));
    let floor = 1e-10 * top;
    let modulus_constant = samples
        .iter()
        .map(|&(dz, d)| d / dz.powf(alpha))
        .fold(0.0, f64::max);
    let monotone = samples
        .windows(2)
        .all(|s| s[1].1 <= s[0].1 + floor);
    let fit: Vec<(f64, f64)> = samples
        .iter()
        .skip((FIT_FROM - 1) as usize)
        .filter(|s| s.1 > floor)
        .map(|&(dz, d)| (dz.ln(), d.ln()))
        .collect();
    let fitted_exponent = if fit.len() >= 3 {
        Some(slope(&fit))
    } else {
        None
    };
    let ok = monotone
        && match fitted_exponent {
            Some(s) => s >= required,
            // Differences at roundoff level throughout: the map is constant.
            None => samples.iter().all(|s| s.1 <= floor.max(1e-300) * 10.0),
        };
    Ok(HemicontinuityReport {
        y,
        samples,
        fitted_exponent,
        required_exponent: required,
        modulus_constant,
        monotone,
        ok,
    })
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub c0: f64,
    /// `4 || |f v|^{p-1} ||_{p'}`.
    pub c_f: f64,
    /// `C(f) (C0^{p_-} + 1) / 2^{1-p_-}`.
    pub script_c: f64,
    /// `max(1 + C0, script_c^{1/(p_- - 1)})`.
    pub lambda: f64,
    pub samples: usize,
    /// Smallest `(C0^{p_-}+1) <T(u),u> / (2^{1-p_-} ||u||^{p_-})`.
    pub worst_lower_ratio: f64,
    /// Smallest `(<T(u),u> - |<Gamma,u>|) / <T(u),u>`.
    pub worst_gamma_margin: f64,
    pub violations: usize,
    pub ok: bool,
}

/// Checks `(C0^{p_-}+1) <T(u),u> >= 2^{1-p_-} ||u||^{p_-}` and
/// `|<Gamma, u>| < <T(u), u>` on random lifted mean-zero pairs with
/// `||u|| > lambda`.
pub fn coercivity_check<R: Rng>(
    data: &ProblemData,
    c0: Option<f64>,
    samples: usize,
    rng: &mut R,
) -> Result<CoercivityReport> {
    let c0 = match c0 {
        Some(c) if c > 0.0 && c.is_finite() => c,
        _ => {
            return Err(Error::Domain(
                "coercivity needs a positive Poincaré constant".into(),
            ))
        }
    };
    let grid = *data.grid();
    let pm = data.p().p_minus();
    let c_f = HOLDER_CONSTANT * data.datum_power_norm()?;
    let script_c = c_f * (c0.powf(pm) + 1.0) / 2f64.powf(1.0 - pm);
    let lambda = (1.0 + c0).max(script_c.powf(1.0 / (pm - 1.0)));
    let mut worst_lower = f64::INFINITY;
    let mut worst_gamma = f64::INFINITY;
    let mut violations = 0;
    let mut done = 0;
    while done < samples {
        let raw = lift(&random_smooth_field(rng, &grid, 5));
        let w = mean_zero_project(&raw, data.v())?;
        let norm = sobolev_norm(&w, data.v(), data.q(), data.p())?;
        if !(norm > 0.0) || w.g.is_zero() {
            continue;
        }
        let target = lambda * rng.random_range(1.05..4.0);
        let w = w.scale(target / norm);
        let h_norm = sobolev_norm(&w, data.v(), data.q(), data.p())?;
        let t = t_pairing(&w, &w, data)?;
        let gamma = gamma_functional(data, &w)?;
        let lower = 2f64.powf(1.0 - pm) * h_norm.powf(pm);
        let ratio = (c0.powf(pm) + 1.0) * t / lower;
        let margin = (t - gamma.abs()) / t;
        if ratio < 1.0 - CHECK_REL_TOL || !(margin > 0.0) {
            violations += 1;
        }
        worst_lower = worst_lower.min(ratio);
        worst_gamma = worst_gamma.min(margin);
        done += 1;
    }
    Ok(CoercivityReport {
        c0,
        c_f,
        script_c,
        lambda,
        samples,
        worst_lower_ratio: worst_lower,
        worst_gamma_margin: worst_gamma,
        violations,
        ok: violations == 0,
    })
}
