//! The Poincaré constant `C0`: ratio evaluation, a multi-start ascent for a
//! lower bound, pair and Neumann-side checks, and the average-equivalence
//! constants for constant exponents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    average, compensated_sum, gradient, gradient_adjoint, integrate, weighted_average,
    ScalarField, VectorField,
};
use crate::mweight::{lq_norm, quad_form, weighted_magnitude};
use crate::neumann::{solve, ChainStep, ProblemData, SolverOptions};
use crate::sampling::random_smooth_field;
use crate::sobolev::SobolevPair;
use crate::vxnorm::{
    b_star, conjugate, luxemburg_norm, luxemburg_of_values, modular, weighted_norm,
    ExponentField, ExtremalExponents, CHECK_REL_TOL, HOLDER_CONSTANT,
};

/// Relative slack of the pair inequality `||u|| <= C0 ||g||`.
pub const PAIR_SLACK: f64 = 1e-8;

/// `||f - f_{E,v}||_{L^p(v)} / ||grad f||_{L_Q^p}`.
pub fn poincare_ratio(f: &ScalarField, data: &ProblemData) -> Result<f64> {
    let den = lq_norm(&gradient(f), data.q(), data.p())?;
    let mean = weighted_average(f, data.v())?;
    let num = weighted_norm(&f.shift(-mean), data.v(), data.p())?;
    if den == 0.0 {
        return Err(Error::UndefinedRatio(format!(
            "gradient norm vanishes (numerator {num:e})"
        )));
    }
    Ok(num / den)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareEstimate {
    /// Best ratio found; a lower bound for the discrete `C0`.
    pub c0_lower: f64,
    pub witness: ScalarField,
    pub restarts: usize,
    /// Every restart stopped on the gain criterion rather than the cap.
    pub converged: bool,
    /// Final ratio of each restart.
    pub restart_ratios: Vec<f64>,
    /// Ratio of each random starting field.
    pub start_ratios: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the relative gain stays below this for `patience` steps.
    pub gain_tol: f64,
    pub patience: usize,
}

impl Default for PoincareOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            seed: 0,
            max_iters: 20_000,
            gain_tol: 1e-8,
            patience: 20,
        }
    }
}

/// Multi-start ascent on [`poincare_ratio`].
pub fn estimate_c0(data: &ProblemData, restarts: usize, seed: u64) -> Result<PoincareEstimate> {
    estimate_c0_with(
        data,
        &PoincareOptions {
            restarts,
            seed,
            ..PoincareOptions::default()
        },
    )
}

pub fn estimate_c0_with(data: &ProblemData, opts: &PoincareOptions) -> Result<PoincareEstimate> {
    let grid = *data.grid();
    let ascent = Ascent::new(data)?;
    let mut best: Option<(f64, ScalarField)> = None;
    let mut restart_ratios = Vec::new();
    let mut start_ratios = Vec::new();
    let mut converged = true;
    let mut iterations = 0;
    for r in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
        let start = (0..8)
            .map(|_| random_smooth_field(&mut rng, &grid, 6))
            .find(|f| !gradient(f).is_zero());
        let Some(start) = start else { continue };
        let Ok(r0) = poincare_ratio(&start, data) else { continue };
        start_ratios.push(r0);
        let run = ascent.run(start.into_values(), opts)?;
        iterations += run.iterations;
        converged &= run.converged;
        let witness = ScalarField::new(grid, run.x)?;
        let ratio = poincare_ratio(&witness, data)?;
        restart_ratios.push(ratio);
        if best.as_ref().is_none_or(|(b, _)| ratio > *b) {
            best = Some((ratio, witness));
        }
    }
    let Some((c0_lower, witness)) = best else {
        return Err(Error::Estimation("every starting field was degenerate".into()));
    };
    Ok(PoincareEstimate {
        c0_lower,
        witness,
        restarts: restart_ratios.len(),
        converged,
        restart_ratios,
        start_ratios,
        iterations,
    })
}

struct Ascent<'a> {
    data: &'a ProblemData,
    /// `v * vol / v(E)`.
    mean_weights: Vec<f64>,
}

struct AscentRun {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl<'a> Ascent<'a> {
    fn new(data: &'a ProblemData) -> Result<Self> {
        let vol = data.grid().cell_volume();
        let mass = integrate(data.v());
        if mass <= 0.0 {
            return Err(Error::DegenerateWeight(mass));
        }
        Ok(Self {
            data,
            mean_weights: data.v().values().iter().map(|v| v * vol / mass).collect(),
        })
    }

    fn mean(&self, x: &[f64]) -> f64 {
        compensated_sum(x.iter().zip(&self.mean_weights).map(|(a, b)| a * b))
    }

    /// Ratio and its gradient; `None` when the gradient norm vanishes.
    fn eval(&self, x: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        let data = self.data;
        let grid = *data.grid();
        let p = data.p();
        let mean = self.mean(x);
        let s: Vec<f64> = x
            .iter()
            .zip(data.v().values())
            .map(|(a, v)| (a - mean) * v)
            .collect();
        let num = luxemburg_of_values(&s, p)?;
        let g = gradient(&ScalarField::new(grid, x.to_vec())?);
        let mag = weighted_magnitude(&g, data.q())?;
        let den = luxemburg_of_values(mag.values(), p)?;
        if den == 0.0 {
            return Ok(None);
        }
        let ratio = num / den;

        let dn_ds = norm_derivative(&s, num, p);
        let dual: f64 = compensated_sum(dn_ds.iter().zip(data.v().values()).map(|(a, v)| a * v));
        let dn: Vec<f64> = dn_ds
            .iter()
            .zip(data.v().values())
            .zip(&self.mean_weights)
            .map(|((a, v), c)| a * v - c * dual)
            .collect();

        let dd_dm = norm_derivative(mag.values(), den, p);
        let n = grid.dim();
        let mut w = vec![0.0; grid.len() * n];
        for c in 0..grid.len() {
            let m = mag.values()[c];
            if m == 0.0 {
                continue;
            }
            let q = data.q().at(c);
            let gc = g.at(c);
            for a in 0..n {
                let qg: f64 = (0..n).map(|b| q[a * n + b] * gc[b]).sum();
                w[c * n + a] = dd_dm[c] * qg / m;
            }
        }
        let dd = gradient_adjoint(&VectorField::new(grid, w)?);
        let grad = dn
            .iter()
            .zip(dd.values())
            .map(|(a, b)| (a - ratio * b) / den)
            .collect();
        Ok(Some((ratio, grad)))
    }

    /// Shift to weighted mean zero and scale to unit gradient norm.
    fn normalize(&self, x: &mut [f64]) -> Result<bool> {
        let mean = self.mean(x);
        x.iter_mut().for_each(|a| *a -= mean);
        let g = gradient(&ScalarField::new(*self.data.grid(), x.to_vec())?);
        let den = lq_norm(&g, self.data.q(), self.data.p())?;
        if den == 0.0 || !den.is_finite() {
            return Ok(false);
        }
        x.iter_mut().for_each(|a| *a /= den);
        Ok(true)
    }

    fn run(&self, mut x: Vec<f64>, opts: &PoincareOptions) -> Result<AscentRun> {
        if !self.normalize(&mut x)? {
            return Ok(AscentRun {
                x,
                iterations: 0,
                converged: false,
            });
        }
        let Some((mut ratio, mut grad)) = self.eval(&x)? else {
            return Ok(AscentRun {
                x,
                iterations: 0,
                converged: false,
            });
        };
        let gmax = grad.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let xmax = x.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let mut alpha = if gmax > 0.0 { 0.1 * xmax / gmax } else { 1.0 };
        let mut quiet = 0;
        for it in 0..opts.max_iters {
            let mut step = alpha;
            let mut accepted = None;
            for _ in 0..60 {
                let mut y: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
                if self.normalize(&mut y)? {
                    if let Some((r, gr)) = self.eval(&y)? {
                        if r >= ratio {
                            accepted = Some((y, r, gr));
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            let Some((y, r, gr)) = accepted else {
                return Ok(AscentRun {
                    x,
                    iterations: it,
                    converged: true,
                });
            };
            let (mut ss, mut sy, mut yy) = (0.0, 0.0, 0.0);
            for i in 0..x.len() {
                let s = y[i] - x[i];
                let d = gr[i] - grad[i];
                ss += s * s;
                sy += s * d;
                yy += d * d;
            }
            // Ascent: the curvature along the step is -sy.
            alpha = if sy < 0.0 {
                if it % 2 == 0 {
                    -ss / sy
                } else {
                    -sy / yy
                }
            } else {
                2.0 * step
            };
            let gain = (r - ratio) / ratio;
            x = y;
            grad = gr;
            ratio = r;
            if gain < opts.gain_tol {
                quiet += 1;
                if quiet >= opts.patience {
                    return Ok(AscentRun {
                        x,
                        iterations: it + 1,
                        converged: true,
                    });
                }
            } else {
                quiet = 0;
            }
        }
        Ok(AscentRun {
            x,
            iterations: opts.max_iters,
            converged: false,
        })
    }
}

/// Partial derivatives of the Luxemburg norm `N` of `s` (finite exponents):
/// `dN/ds_i = p_i |s_i/N|^{p_i-1} sgn(s_i) vol / sum_j p_j |s_j/N|^{p_j} vol`.
fn norm_derivative(s: &[f64], norm: f64, p: &ExponentField) -> Vec<f64> {
    let vol = p.grid().cell_volume();
    let denom = compensated_sum(
        s.iter()
            .zip(p.values())
            .map(|(x, e)| e * (x.abs() / norm).powf(*e) * vol),
    );
    s.iter()
        .zip(p.values())
        .map(|(x, e)| e * (x.abs() / norm).powf(e - 1.0) * x.signum() * vol / denom)
        .map(|d| if d.is_finite() { d } else { 0.0 })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairVerdict {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `||u||_{L^p(v)} <= C0 ||g||_{L_Q^p} (1 + 1e-8)`.
pub fn poincare_pair_check(w: &SobolevPair, data: &ProblemData, c0: f64) -> Result<PairVerdict> {
    let lhs = weighted_norm(&w.u, data.v(), data.p())?;
    let rhs = c0 * lq_norm(&w.g, data.q(), data.p())?;
    Ok(PairVerdict {
        lhs,
        rhs,
        ok: lhs <= rhs * (1.0 + PAIR_SLACK),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub index: usize,
    /// Constant probes vanish after normalisation.
    pub skipped: bool,
    /// `poincare_ratio` of the probe.
    pub measured_ratio: f64,
    /// `4 ||g||^{b*-1}`, the constant delivered by the Neumann solution.
    pub implied_constant: f64,
    pub exponents: Option<ExtremalExponents>,
    /// `int |f1 v|^p` minus `int |sqrt(Q) g|^{p-1} |sqrt(Q) grad f1|`.
    pub test_identity_gap: f64,
    pub steps: Vec<ChainStep>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeumannPoincareReport {
    pub probes: Vec<ProbeOutcome>,
    pub ok: bool,
}

/// For each probe `f`, solves with the normalised datum
/// `f1 = (f - f_{E,v}) / ||f - f_{E,v}||` and checks
/// `||f1|| <= 4 ||g||^{b*-1} ||grad f1||` and `||g||^{p*} <= 4 ||f1||^{r*-1} ||u||`.
pub fn neumann_implies_poincare_check(
    data: &ProblemData,
    probes: &[ScalarField],
    opts: &SolverOptions,
) -> Result<NeumannPoincareReport> {
    let p = data.p();
    let mut out = Vec::with_capacity(probes.len());
    for (index, f) in probes.iter().enumerate() {
        let mean = weighted_average(f, data.v())?;
        let f0 = f.shift(-mean);
        let n0 = weighted_norm(&f0, data.v(), p)?;
        if n0 == 0.0 || gradient(&f0).is_zero() {
            out.push(ProbeOutcome {
                index,
                skipped: true,
                measured_ratio: f64::NAN,
                implied_constant: f64::NAN,
                exponents: None,
                test_identity_gap: 0.0,
                steps: Vec::new(),
                ok: true,
            });
            continue;
        }
        let f1 = f0.scale(1.0 / n0);
        let probe_data = data.with_datum(f1.clone())?;
        let report = solve(&probe_data, opts)?;
        let g = &report.solution.g;
        let g_norm = lq_norm(g, data.q(), p)?;
        let u_norm = weighted_norm(&report.solution.u, data.v(), p)?;
        let f1_norm = weighted_norm(&f1, data.v(), p)?;
        let grad_f1 = gradient(&f1);
        let grad_norm = lq_norm(&grad_f1, data.q(), p)?;
        let e = ExtremalExponents::from_norms(p, g_norm, f1_norm);
        let bs = b_star(g_norm, p.p_minus(), p.p_plus());

        let sg = weighted_magnitude(g, data.q())?;
        let powered = ScalarField::new(
            *data.grid(),
            sg.values()
                .iter()
                .zip(p.values())
                .map(|(a, e)| a.powf(e - 1.0))
                .collect(),
        )?;
        let powered_norm = luxemburg_norm(&powered, &conjugate(p))?;
        let n = data.grid().dim();
        let vol = data.grid().cell_volume();
        let pairing = compensated_sum((0..data.grid().len()).map(|c| {
            let m = data.q().at(c);
            let d = grad_f1.at(c);
            powered.values()[c] * quad_form(m, n, d, d).max(0.0).sqrt() * vol
        }));
        let rho = modular(&f1.mul(data.v())?, p)?;
        let implied = HOLDER_CONSTANT * g_norm.powf(bs - 1.0);
        let steps = vec![
            ChainStep {
                name: "unit_modular".into(),
                lhs: (rho - 1.0).abs(),
                rhs: 1e-10,
                ok: (rho - 1.0).abs() <= 1e-10,
            },
            step("holder", pairing, HOLDER_CONSTANT * powered_norm * grad_norm),
            step("power_norm", powered_norm, g_norm.powf(bs - 1.0)),
            step("poincare_from_neumann", f1_norm, implied * grad_norm),
            step(
                "modular_gradient_bound",
                g_norm.powf(e.p_star),
                HOLDER_CONSTANT * f1_norm.powf(e.r_star - 1.0) * u_norm,
            ),
        ];
        let ok = steps.iter().all(|s| s.ok);
        out.push(ProbeOutcome {
            index,
            skipped: false,
            measured_ratio: poincare_ratio(f, data)?,
            implied_constant: implied,
            exponents: Some(e),
            test_identity_gap: rho - pairing,
            steps,
            ok,
        });
    }
    let ok = out.iter().all(|o| o.ok);
    Ok(NeumannPoincareReport { probes: out, ok })
}

fn step(name: &str, lhs: f64, rhs: f64) -> ChainStep {
    ChainStep {
        name: name.into(),
        lhs,
        rhs,
        ok: lhs <= rhs * (1.0 + CHECK_REL_TOL),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageEquivalenceReport {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// `None` when the fourth inequality was not requested.
    pub k4: Option<f64>,
    pub verdicts: Vec<ChainStep>,
    /// The fourth constant `1 + K4 w(E)^{1/p}` mirrors the first and is
    /// assembled here rather than read off a displayed formula.
    pub fourth_constant_reconstructed: bool,
    pub ok: bool,
}

/// The four comparisons between `f - f_{E,v}`, `f - f_{E,w}` (`w = v^p`) and
/// `f - f_E` in `L^p(v)` for a constant exponent.
pub fn average_equivalence_check(
    f: &ScalarField,
    v: &ScalarField,
    p_const: f64,
    include_fourth: bool,
) -> Result<AverageEquivalenceReport> {
    if !(p_const > 1.0 && p_const.is_finite()) {
        return Err(Error::Validation(format!(
            "exponent {p_const} must lie in (1, inf)"
        )));
    }
    let grid = *f.grid();
    grid.check_same(v.grid(), "average_equivalence_check")?;
    let p = ExponentField::constant(grid, p_const)?;
    let pc = p_const / (p_const - 1.0);
    let measure = grid.measure();
    let v_mass = integrate(v);
    let w = v.map(|x| x.powf(p_const));
    let w_mass = integrate(&w);

    // Deviations are shift invariant; anchoring at one cell makes them
    // exactly zero for constant f.
    let f = &f.shift(-f.values()[0]);
    let f_v = weighted_average(f, v)?;
    let f_w = weighted_average(f, &w)?;
    let f_e = average(f);
    let norm = |c: f64| weighted_norm(&f.shift(-c), v, &p);
    let (dv, dw, de) = (norm(f_v)?, norm(f_w)?, norm(f_e)?);

    let k1 = measure.powf(1.0 / pc) / v_mass;
    let k2 = w_mass.powf(-1.0 / p_const);
    let k3 = measure / v_mass;
    let wp = w_mass.powf(1.0 / p_const);
    let mut verdicts = vec![
        step("weighted_by_power_weighted", dv, (1.0 + k1 * wp) * dw),
        step("power_weighted_by_weighted", dw, (1.0 + k2 * wp) * dv),
        step("weighted_by_plain", dv, (1.0 + k3) * de),
    ];
    let k4 = if include_fourth {
        if let Some(i) = v.values().iter().position(|&x| x <= 0.0) {
            return Err(Error::Domain(format!(
                "the fourth comparison needs 1/v in L^p', but v vanishes at cell {i}"
            )));
        }
        let inv = integrate(&v.map(|x| x.powf(-pc)));
        if !inv.is_finite() {
            return Err(Error::Domain("integral of v^(-p') is not finite".into()));
        }
        let k4 = inv.powf(1.0 / pc) / measure;
        verdicts.push(step("plain_by_weighted", de, (1.0 + k4 * wp) * dv));
        Some(k4)
    } else {
        None
    };
    let ok = verdicts.iter().all(|s| s.ok);
    Ok(AverageEquivalenceReport {
        k1,
        k2,
        k3,
        k4,
        verdicts,
        fourth_constant_reconstructed: include_fourth,
        ok,
    })
}
