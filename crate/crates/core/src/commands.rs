//! The `norm`, `solve`, `poincare` and `verify` commands. Each returns a
//! serialisable report; randomness comes only from the seed argument.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{gradient, ScalarField};
use crate::io::{write_pair, write_scalar_csv};
use crate::mweight::{component_norm_equivalence_check, lq_norm};
use crate::neumann::{
    coercivity_check, hemicontinuity_check, monotonicity_check, regularity_check, solve,
    ChainStep, ProblemData, RegularityReport, SolverReport,
};
use crate::poincare::{
    average_equivalence_check, estimate_c0_with, neumann_implies_poincare_check,
    poincare_pair_check, poincare_ratio,
};
use crate::sampling::{
    random_datum, random_exponent, random_grid, random_piecewise_field, random_psd_field,
    random_smooth_field, random_vector_field, random_weight,
};
use crate::sobolev::lift;
use crate::vxnorm::{
    holder_check_with_constant, luxemburg_norm, mod_norm_bounds_check, modular,
    power_norm_check, weighted_norm, ExtremalExponents, HOLDER_CONSTANT,
};

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialise");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub p_minus: f64,
    pub p_plus: f64,
    /// `rho(f)`.
    pub modular: f64,
    /// `||f||_{p}`.
    pub luxemburg_norm: f64,
    /// `||f v||_{p}`.
    pub weighted_norm: f64,
    /// `|| |sqrt(Q) grad f| ||_{p}`.
    pub lq_norm_of_gradient: f64,
}

impl NormReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

/// Norms of the configured datum `f`.
pub fn cmd_norm(cfg: &RunConfig) -> Result<NormReport> {
    let fields = cfg.build()?;
    let p = &fields.p;
    Ok(NormReport {
        p_minus: p.p_minus(),
        p_plus: p.p_plus(),
        modular: modular(&fields.f, p)?,
        luxemburg_norm: luxemburg_norm(&fields.f, p)?,
        weighted_norm: weighted_norm(&fields.f, &fields.v, p)?,
        lq_norm_of_gradient: lq_norm(&gradient(&fields.f), &fields.q, p)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub tol: f64,
    pub weak_residual: f64,
    pub cell_residual: f64,
    pub iterations: usize,
    pub stage_iterations: Vec<usize>,
    pub epsilon_final: f64,
    pub exponents: ExtremalExponents,
    pub u_norm: f64,
    pub g_norm: f64,
    pub f_norm: f64,
    pub c1_observed: Option<f64>,
    pub c0_estimate: f64,
    pub regularity: RegularityReport,
    pub energy_trace: Vec<f64>,
    pub files: Vec<String>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

fn paths(p: &[PathBuf]) -> Vec<String> {
    p.iter().map(|p| p.display().to_string()).collect()
}

/// Solves the configured problem, runs the regularity chain with an
/// estimated `C0`, and dumps `u` and `g` when `out` is given.
pub fn cmd_solve(
    cfg: &RunConfig,
    seed: u64,
    tol: Option<f64>,
    out: Option<&Path>,
) -> Result<SolveReport> {
    let data = cfg.build()?.problem()?;
    let r = solve(&data, &cfg.solver_options(tol))?;
    let c0 = estimate_c0_with(&data, &cfg.poincare_options(seed))?.c0_lower;
    let regularity = regularity_check(&r, &data, c0)?;
    let mut files = Vec::new();
    if let Some(dir) = out {
        let (a, b) = write_pair(dir, "solution", &r.solution)?;
        files = paths(&[a, b]);
    }
    Ok(solve_report(r, c0, regularity, files))
}

fn solve_report(
    r: SolverReport,
    c0: f64,
    regularity: RegularityReport,
    files: Vec<String>,
) -> SolveReport {
    SolveReport {
        converged: r.converged,
        tol: r.tol,
        weak_residual: r.weak_residual,
        cell_residual: r.cell_residual,
        iterations: r.iterations,
        stage_iterations: r.stage_iterations,
        epsilon_final: r.epsilon_final,
        exponents: r.exponents,
        u_norm: r.u_norm,
        g_norm: r.g_norm,
        f_norm: r.f_norm,
        c1_observed: r.c1_observed,
        c0_estimate: c0,
        regularity,
        energy_trace: r.energy_trace,
        files,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoincareReport {
    pub c0_lower: f64,
    pub restarts: usize,
    pub converged: bool,
    pub iterations: usize,
    pub restart_ratios: Vec<f64>,
    pub start_ratios: Vec<f64>,
    /// `poincare_ratio` recomputed from the stored witness.
    pub witness_ratio: f64,
    pub files: Vec<String>,
}

impl PoincareReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

pub fn cmd_poincare(cfg: &RunConfig, seed: u64, out: Option<&Path>) -> Result<PoincareReport> {
    let data = cfg.build()?.problem()?;
    let est = estimate_c0_with(&data, &cfg.poincare_options(seed))?;
    let mut files = Vec::new();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("witness.csv");
        write_scalar_csv(std::fs::File::create(&path)?, &est.witness)?;
        files = paths(&[path]);
    }
    Ok(PoincareReport {
        c0_lower: est.c0_lower,
        restarts: est.restarts,
        converged: est.converged,
        iterations: est.iterations,
        restart_ratios: est.restart_ratios,
        start_ratios: est.start_ratios,
        witness_ratio: poincare_ratio(&est.witness, &data)?,
        files,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Random instances for each inequality family.
    pub instances: usize,
    pub holder_constant: f64,
    pub tol: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            instances: 200,
            holder_constant: HOLDER_CONSTANT,
            tol: None,
        }
    }
}

impl VerifyOptions {
    pub fn from_config(cfg: &RunConfig, tol: Option<f64>) -> Self {
        let d = Self::default();
        Self {
            instances: cfg.verify.instances.unwrap_or(d.instances),
            holder_constant: cfg.verify.debug_holder_constant.unwrap_or(d.holder_constant),
            tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    pub violations: usize,
    /// Smallest relative slack over the instances; negative on a violation.
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub holder_constant: f64,
    pub c0_estimate: f64,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }
}

/// `(rhs - lhs) / max(|lhs|, |rhs|)`, zero when both vanish.
fn margin(lhs: f64, rhs: f64) -> f64 {
    let s = lhs.abs().max(rhs.abs());
    if s == 0.0 {
        0.0
    } else {
        (rhs - lhs) / s
    }
}

struct Tally {
    name: &'static str,
    instances: usize,
    violations: usize,
    worst: f64,
    note: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            instances: 0,
            violations: 0,
            worst: f64::INFINITY,
            note: None,
        }
    }

    fn record(&mut self, ok: bool, margin: f64) {
        self.instances += 1;
        if !ok {
            self.violations += 1;
        }
        self.worst = self.worst.min(margin);
    }

    fn steps(&mut self, steps: &[ChainStep]) {
        for s in steps {
            self.record(s.ok, margin(s.lhs, s.rhs));
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            passed: self.violations == 0 && self.instances > 0,
            instances: self.instances,
            violations: self.violations,
            worst_margin: if self.instances == 0 { 0.0 } else { self.worst },
            note: self.note,
        }
    }
}

/// Runs the whole inequality battery. Failures are reported, not raised.
pub fn cmd_verify(cfg: &RunConfig, seed: u64, opts: &VerifyOptions) -> Result<VerifyReport> {
    let data = cfg.build()?.problem()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = opts.instances;
    let mut checks = Vec::new();

    let mut holder = Tally::new("holder");
    let mut normalized = Tally::new("normalized_modular");
    let mut modnorm = Tally::new("modular_norm_bounds");
    let mut power = Tally::new("power_norm");
    let mut equiv = Tally::new("component_norm_equivalence");
    for _ in 0..n {
        let grid = random_grid(&mut rng);
        let p = random_exponent(&mut rng, &grid, 1.1, 6.0);
        let f = random_datum(&mut rng, &grid);
        let g = random_datum(&mut rng, &grid);
        let h = holder_check_with_constant(&f, &g, &p, opts.holder_constant)?;
        holder.record(h.ok, margin(h.lhs, h.rhs));
        let nf = luxemburg_norm(&f, &p)?;
        if nf > 0.0 {
            let rho = modular(&f.scale(1.0 / nf), &p)?;
            normalized.record((rho - 1.0).abs() <= 1e-10, -(rho - 1.0).abs());
        }
        let m = mod_norm_bounds_check(&f, &p)?;
        modnorm.record(m.ok, margin(m.lower, m.modular).min(margin(m.modular, m.upper)));
        let pw = power_norm_check(&f, &p)?;
        power.record(pw.ok, margin(pw.lower, pw.mid).min(margin(pw.mid, pw.upper)));
        let degenerate = rng.random_bool(0.5);
        let q = random_psd_field(&mut rng, &grid, degenerate);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let vf = random_vector_field(&mut rng, &grid, scale);
        let e = component_norm_equivalence_check(&vf, &q, &p)?;
        equiv.record(e.ok, margin(e.lower, e.mid).min(margin(e.mid, e.upper)));
    }
    checks.extend([holder, normalized, modnorm, power, equiv].map(Tally::finish));

    let mut mono = Tally::new("monotonicity");
    for k in 0..4 {
        let d = if k == 0 {
            data.clone()
        } else {
            let grid = random_grid(&mut rng);
            ProblemData::new(
                random_exponent(&mut rng, &grid, 1.1, 6.0),
                random_weight(&mut rng, &grid, 0.2, 5.0),
                random_psd_field(&mut rng, &grid, true),
                random_datum(&mut rng, &grid),
            )?
        };
        let r = monotonicity_check(&d, n.div_ceil(4), &mut rng)?;
        mono.instances += r.trials;
        mono.violations += r.violations;
        mono.worst = mono.worst.min(r.worst_normalized);
    }
    checks.push(mono.finish());

    let grid = *data.grid();
    let mut hemi = Tally::new("hemicontinuity");
    for _ in 0..4 {
        let u = lift(&random_smooth_field(&mut rng, &grid, 5));
        let w = lift(&random_smooth_field(&mut rng, &grid, 5));
        let y = rng.random_range(-1.0..1.0);
        let r = hemicontinuity_check(&data, &u, &w, y)?;
        let m = r.fitted_exponent.map_or(0.0, |s| s - r.required_exponent);
        hemi.record(r.ok, m);
    }
    checks.push(hemi.finish());

    let c0 = estimate_c0_with(&data, &cfg.poincare_options(seed))?.c0_lower;
    let mut coercive = Tally::new("coercivity");
    let r = coercivity_check(&data, Some(c0), n.min(100), &mut rng)?;
    coercive.instances = r.samples;
    coercive.violations = r.violations;
    coercive.worst = (r.worst_lower_ratio - 1.0).min(r.worst_gamma_margin);
    checks.push(coercive.finish());

    let solver_opts = cfg.solver_options(opts.tol);
    let mut chain = Tally::new("regularity_chain");
    let mut pair = Tally::new("poincare_pair");
    match solve(&data, &solver_opts) {
        Ok(r) => {
            let reg = regularity_check(&r, &data, c0)?;
            chain.steps(&reg.steps);
            let pv = poincare_pair_check(&r.solution, &data, c0)?;
            pair.record(pv.ok, margin(pv.lhs, pv.rhs));
        }
        Err(Error::NotConverged { residual, .. }) => {
            chain.record(false, f64::NEG_INFINITY);
            chain.note = Some(format!("solver did not converge, residual {residual:e}"));
        }
        Err(e) => return Err(e),
    }
    checks.push(chain.finish());
    checks.push(pair.finish());

    let mut neumann = Tally::new("neumann_implies_poincare");
    let probes: Vec<ScalarField> = (0..3)
        .map(|_| random_smooth_field(&mut rng, &grid, 4))
        .collect();
    match neumann_implies_poincare_check(&data, &probes, &solver_opts) {
        Ok(r) => {
            for p in r.probes.iter().filter(|p| !p.skipped) {
                neumann.steps(&p.steps);
            }
        }
        Err(Error::NotConverged { residual, .. }) => {
            neumann.record(false, f64::NEG_INFINITY);
            neumann.note = Some(format!("solver did not converge, residual {residual:e}"));
        }
        Err(e) => return Err(e),
    }
    checks.push(neumann.finish());

    let mut avg = Tally::new("average_equivalence");
    for _ in 0..n {
        let g = random_grid(&mut rng);
        let f = random_piecewise_field(&mut rng, &g, -3.0, 3.0);
        let v = random_weight(&mut rng, &g, 0.2, 5.0);
        let p = rng.random_range(1.1..6.0);
        let r = average_equivalence_check(&f, &v, p, true)?;
        avg.steps(&r.verdicts);
    }
    avg.note = Some("fourth constant reconstructed as 1 + K4 w(E)^(1/p)".into());
    checks.push(avg.finish());

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed,
        holder_constant: opts.holder_constant,
        c0_estimate: c0,
        checks,
        all_passed,
    })
}
