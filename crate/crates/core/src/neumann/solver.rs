use crate::error::{Error, Result};
use crate::grid::{compensated_sum, ScalarField};
use crate::mweight::lq_norm;
use crate::sobolev::{lift, sobolev_norm, SobolevPair};
use crate::vxnorm::{weighted_norm, ExtremalExponents};

use super::mesh::DualMesh;
use super::{gamma_functional, t_pairing, ProblemData};

const MAX_HALVINGS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Weak-residual tolerance; `None` picks 1e-8 for `p = 2` and 1e-6 otherwise.
    pub tol: Option<f64>,
    pub eps_schedule: Vec<f64>,
    /// Iteration cap per stage.
    pub max_iters: usize,
    pub armijo: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: None,
            eps_schedule: vec![1e-2, 1e-4, 1e-6, 1e-8],
            max_iters: 50_000,
            armijo: 1e-4,
        }
    }
}

impl SolverOptions {
    pub fn tolerance_for(&self, data: &ProblemData) -> f64 {
        self.tol.unwrap_or(if data.p().is_constant() && data.p().p_minus() == 2.0 {
            1e-8
        } else {
            1e-6
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    /// `(u, gradient(u))` with `u` mean-zero.
    pub solution: SobolevPair,
    /// Weak residual of the discretisation that was minimised.
    pub weak_residual: f64,
    /// The same residual measured with the cell-centred pairing of `solution`.
    pub cell_residual: f64,
    pub energy_trace: Vec<f64>,
    pub exponents: ExtremalExponents,
    /// `||u|| / ||f||^{(r*-1)/(p*-1)}`, undefined for `f = 0`.
    pub c1_observed: Option<f64>,
    pub iterations: usize,
    pub stage_iterations: Vec<usize>,
    pub epsilon_final: f64,
    pub tol: f64,
    pub converged: bool,
    pub u_norm: f64,
    pub g_norm: f64,
    pub f_norm: f64,
}

struct Problem {
    mesh: DualMesh,
    /// `vol * |f|^{p-2} f v^p`.
    load: Vec<f64>,
    /// `v * vol`, the normal of the mean-zero hyperplane.
    normal: Vec<f64>,
    mass: f64,
    normal_sq: f64,
    /// `sobolev_norm(lift(e_k - (e_k)_{E,v}))`.
    test_norms: Vec<f64>,
}

impl Problem {
    fn new(data: &ProblemData) -> Result<Self> {
        let grid = *data.grid();
        let vol = grid.cell_volume();
        let load = data.datum_coefficients().iter().map(|b| b * vol).collect();
        let normal: Vec<f64> = data.v().values().iter().map(|v| v * vol).collect();
        let mass = compensated_sum(normal.iter().copied());
        let normal_sq = compensated_sum(normal.iter().map(|c| c * c));
        let mut test_norms = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let ck = normal[k] / mass;
            let mut phi = vec![-ck; grid.len()];
            phi[k] += 1.0;
            let phi = lift(&ScalarField::new(grid, phi)?);
            test_norms.push(sobolev_norm(&phi, data.v(), data.q(), data.p())?);
        }
        Ok(Self {
            mesh: DualMesh::new(data),
            load,
            normal,
            mass,
            normal_sq,
            test_norms,
        })
    }

    fn energy(&self, u: &[f64], eps: f64) -> f64 {
        let linear = compensated_sum(self.load.iter().zip(u).map(|(b, x)| b * x));
        self.mesh.flux_energy(u, eps) + linear
    }

    fn gradient(&self, u: &[f64], eps: f64, out: &mut [f64]) {
        self.mesh.flux_gradient(u, eps, out);
        for (o, b) in out.iter_mut().zip(&self.load) {
            *o += b;
        }
    }

    /// `max_k |<dJ, phi_k>| / ||phi_k||` with `phi_k = e_k - (e_k)_{E,v}`.
    fn residual(&self, grad: &[f64]) -> f64 {
        let total = compensated_sum(grad.iter().copied());
        grad.iter()
            .zip(&self.normal)
            .zip(&self.test_norms)
            .filter(|(_, &n)| n > 0.0)
            .map(|((g, c), n)| (g - c / self.mass * total).abs() / n)
            .fold(0.0, f64::max)
    }

    fn project_direction(&self, d: &mut [f64]) {
        let t = compensated_sum(d.iter().zip(&self.normal).map(|(a, b)| a * b)) / self.normal_sq;
        for (x, c) in d.iter_mut().zip(&self.normal) {
            *x -= t * c;
        }
    }

    fn project_point(&self, u: &mut [f64]) {
        let mean = compensated_sum(u.iter().zip(&self.normal).map(|(a, b)| a * b)) / self.mass;
        u.iter_mut().for_each(|x| *x -= mean);
    }
}

/// Minimises the regularised energy over mean-zero grid functions with
/// Barzilai-Borwein steps, Armijo backtracking and continuation in `eps`.
pub fn solve(data: &ProblemData, opts: &SolverOptions) -> Result<SolverReport> {
    if opts.eps_schedule.is_empty() || opts.eps_schedule.iter().any(|&e| !(e >= 0.0)) {
        return Err(Error::Config("eps schedule must be non-empty and non-negative".into()));
    }
    let tol = opts.tolerance_for(data);
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    let pb = Problem::new(data)?;
    let n = pb.mesh.nodes();

    let mut u = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut trace = Vec::new();
    let mut stage_iterations = Vec::new();
    let mut total = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let last = opts.eps_schedule.len() - 1;

    for (stage, &eps) in opts.eps_schedule.iter().enumerate() {
        let final_stage = stage == last;
        let stage_tol = if final_stage { tol } else { tol.max(eps) };
        let mut j = pb.energy(&u, eps);
        pb.gradient(&u, eps, &mut grad);
        let mut d = grad.clone();
        pb.project_direction(&mut d);
        let mut alpha = initial_step(&d);
        let mut iters = 0;
        let mut probe = vec![0.0; n];
        loop {
            residual = if final_stage {
                let mut g0 = vec![0.0; n];
                pb.gradient(&u, 0.0, &mut g0);
                pb.residual(&g0)
            } else {
                pb.residual(&grad)
            };
            if residual <= stage_tol {
                converged = final_stage;
                break;
            }
            if iters >= opts.max_iters {
                break;
            }
            let dd = compensated_sum(d.iter().map(|x| x * x));
            if dd == 0.0 {
                break;
            }
            // Backtracking from the BB step.
            let mut step = alpha;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                for ((p, x), di) in probe.iter_mut().zip(&u).zip(&d) {
                    *p = x - step * di;
                }
                pb.project_point(&mut probe);
                let jn = pb.energy(&probe, eps);
                if jn <= j - opts.armijo * step * dd {
                    accepted = Some(jn);
                    break;
                }
                step *= 0.5;
            }
            let Some(jn) = accepted else {
                // No representable decrease left along the gradient.
                break;
            };
            iters += 1;
            let mut grad_new = vec![0.0; n];
            pb.gradient(&probe, eps, &mut grad_new);
            let mut d_new = grad_new.clone();
            pb.project_direction(&mut d_new);

            let (mut ss, mut sy, mut yy) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let s = probe[i] - u[i];
                let y = d_new[i] - d[i];
                ss += s * s;
                sy += s * y;
                yy += y * y;
            }
            alpha = if sy > 0.0 {
                if iters % 2 == 1 {
                    ss / sy
                } else {
                    sy / yy
                }
            } else {
                2.0 * step
            };
            std::mem::swap(&mut u, &mut probe);
            grad = grad_new;
            d = d_new;
            j = jn;
            trace.push(j);
        }
        total += iters;
        stage_iterations.push(iters);
    }

    let report = finish(
        data,
        &pb,
        u,
        residual,
        trace,
        total,
        stage_iterations,
        *opts.eps_schedule.last().expect("non-empty"),
        tol,
        converged,
    )?;
    if converged {
        Ok(report)
    } else {
        Err(Error::NotConverged {
            residual,
            iterations: total,
            report: Box::new(report),
        })
    }
}

fn initial_step(d: &[f64]) -> f64 {
    let sup = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if sup > 0.0 {
        1.0 / sup
    } else {
        1.0
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    data: &ProblemData,
    pb: &Problem,
    mut u: Vec<f64>,
    weak_residual: f64,
    energy_trace: Vec<f64>,
    iterations: usize,
    stage_iterations: Vec<usize>,
    epsilon_final: f64,
    tol: f64,
    converged: bool,
) -> Result<SolverReport> {
    pb.project_point(&mut u);
    let grid = *data.grid();
    let solution = lift(&ScalarField::new(grid, u)?);
    let u_norm = weighted_norm(&solution.u, data.v(), data.p())?;
    let g_norm = lq_norm(&solution.g, data.q(), data.p())?;
    let f_norm = data.datum_norm()?;
    let exponents = ExtremalExponents::from_norms(data.p(), g_norm, f_norm);
    let c1_observed = if data.f().is_zero() {
        None
    } else {
        Some(u_norm / f_norm.powf(exponents.regularity_power()))
    };
    let cell_residual = cell_residual(data, pb, &solution)?;
    Ok(SolverReport {
        solution,
        weak_residual,
        cell_residual,
        energy_trace,
        exponents,
        c1_observed,
        iterations,
        stage_iterations,
        epsilon_final,
        tol,
        converged,
        u_norm,
        g_norm,
        f_norm,
    })
}

/// Residual of `solution` under the cell-centred pairings `t_pairing` and
/// `gamma_functional`, over the same test basis.
fn cell_residual(data: &ProblemData, pb: &Problem, solution: &SobolevPair) -> Result<f64> {
    let grid = *data.grid();
    let mut worst: f64 = 0.0;
    for k in 0..grid.len() {
        if pb.test_norms[k] == 0.0 {
            continue;
        }
        let ck = pb.normal[k] / pb.mass;
        let mut phi = vec![-ck; grid.len()];
        phi[k] += 1.0;
        let phi = lift(&ScalarField::new(grid, phi)?);
        let r = t_pairing(solution, &phi, data)? - gamma_functional(data, &phi)?;
        worst = worst.max(r.abs() / pb.test_norms[k]);
    }
    Ok(worst)
}
