//! JSON run configuration.
//!
//! Every field spec is validated against the admissibility rules of its
//! module by [`RunConfig::build`] before any command runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid, ScalarField};
use crate::mweight::MatrixField;
use crate::neumann::{ProblemData, SolverOptions};
use crate::poincare::PoincareOptions;
use crate::vxnorm::ExponentField;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest grid a configuration may request.
pub const MAX_CELLS: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub domain: DomainSpec,
    pub exponent: ExponentSpec,
    #[serde(default = "ScalarSpec::one")]
    pub weight: ScalarSpec,
    #[serde(default)]
    pub matrix: MatrixSpec,
    #[serde(default = "ScalarSpec::zero")]
    pub datum: ScalarSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub poincare: PoincareConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// `[low, high]` per axis.
    pub extents: Vec<[f64; 2]>,
    pub resolution: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarSpec {
    Constant {
        value: f64,
    },
    /// `offset + slope . x`.
    Affine {
        offset: f64,
        slope: Vec<f64>,
    },
    /// `values[k]` on the k-th interval cut by `breakpoints` along `axis`.
    PiecewiseAxis {
        axis: usize,
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// One value per cell in traversal order.
    Table {
        values: Vec<f64>,
    },
    /// `amplitude * prod_a cos(pi k_a (x_a - low_a) / (high_a - low_a))`.
    Cosine {
        amplitude: f64,
        frequency: Vec<f64>,
    },
}

/// Like [`ScalarSpec`] but `null` stands for an infinite exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExponentSpec {
    Constant {
        value: Option<f64>,
    },
    Affine {
        offset: f64,
        slope: Vec<f64>,
    },
    PiecewiseAxis {
        axis: usize,
        breakpoints: Vec<f64>,
        values: Vec<Option<f64>>,
    },
    Table {
        values: Vec<Option<f64>>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatrixSpec {
    #[default]
    Identity,
    Diagonal {
        diag: Vec<f64>,
    },
    /// Row-major `n x n`.
    ConstantMatrix {
        matrix: Vec<f64>,
    },
    /// 1D: `|x - x0|^alpha`. 2D: `diag(lambda_max, |x - x0|^alpha)`.
    RadialDegenerate {
        center: Vec<f64>,
        alpha: f64,
        #[serde(default = "one")]
        lambda_max: f64,
    },
    /// Row-major matrices, one per cell in traversal order.
    Table {
        entries: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: Option<f64>,
    pub eps_schedule: Option<Vec<f64>>,
    pub max_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoincareConfig {
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random instances per inequality family.
    pub instances: Option<usize>,
    /// Replaces the Hölder constant 4; only for falsification runs.
    pub debug_holder_constant: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl ScalarSpec {
    fn one() -> Self {
        ScalarSpec::Constant { value: 1.0 }
    }

    fn zero() -> Self {
        ScalarSpec::Constant { value: 0.0 }
    }

    pub fn build(&self, grid: &Grid, what: &str) -> Result<ScalarField> {
        let values = match self {
            ScalarSpec::Constant { value } => vec![*value; grid.len()],
            ScalarSpec::Affine { offset, slope } => {
                check_len(slope.len(), grid.dim(), what, "slope")?;
                grid.centers()
                    .map(|x| offset + slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                    .collect()
            }
            ScalarSpec::PiecewiseAxis {
                axis,
                breakpoints,
                values,
            } => piecewise(grid, *axis, breakpoints, values, what)?,
            ScalarSpec::Table { values } => {
                check_len(values.len(), grid.len(), what, "values")?;
                values.clone()
            }
            ScalarSpec::Cosine {
                amplitude,
                frequency,
            } => {
                check_len(frequency.len(), grid.dim(), what, "frequency")?;
                let ext: Vec<(f64, f64)> = (0..grid.dim()).map(|a| grid.extent(a)).collect();
                grid.centers()
                    .map(|x| {
                        amplitude
                            * frequency
                                .iter()
                                .enumerate()
                                .map(|(a, k)| {
                                    let t = (x[a] - ext[a].0) / (ext[a].1 - ext[a].0);
                                    (std::f64::consts::PI * k * t).cos()
                                })
                                .product::<f64>()
                    })
                    .collect()
            }
        };
        ScalarField::new(*grid, values).map_err(|e| Error::Validation(format!("{what}: {e}")))
    }
}

impl ExponentSpec {
    pub fn build(&self, grid: &Grid) -> Result<ExponentField> {
        let inf = |v: &Option<f64>| v.unwrap_or(f64::INFINITY);
        let values = match self {
            ExponentSpec::Constant { value } => vec![inf(value); grid.len()],
            ExponentSpec::Affine { offset, slope } => ScalarSpec::Affine {
                offset: *offset,
                slope: slope.clone(),
            }
            .build(grid, "exponent")?
            .into_values(),
            ExponentSpec::PiecewiseAxis {
                axis,
                breakpoints,
                values,
            } => {
                let v: Vec<f64> = values.iter().map(inf).collect();
                piecewise(grid, *axis, breakpoints, &v, "exponent")?
            }
            ExponentSpec::Table { values } => {
                check_len(values.len(), grid.len(), "exponent", "values")?;
                values.iter().map(inf).collect()
            }
        };
        ExponentField::new(*grid, values)
    }
}

impl MatrixSpec {
    pub fn build(&self, grid: &Grid) -> Result<MatrixField> {
        let n = grid.dim();
        match self {
            MatrixSpec::Identity => Ok(MatrixField::identity(*grid)),
            MatrixSpec::Diagonal { diag } => {
                check_len(diag.len(), n, "matrix", "diag")?;
                MatrixField::diagonal(*grid, diag)
            }
            MatrixSpec::ConstantMatrix { matrix } => {
                check_len(matrix.len(), n * n, "matrix", "matrix")?;
                MatrixField::constant(*grid, matrix)
            }
            MatrixSpec::RadialDegenerate {
                center,
                alpha,
                lambda_max,
            } => {
                check_len(center.len(), n, "matrix", "center")?;
                if !(*alpha >= 0.0 && alpha.is_finite()) {
                    return Err(Error::Validation(format!(
                        "matrix: alpha {alpha} must be finite and non-negative"
                    )));
                }
                if !(*lambda_max >= 0.0 && lambda_max.is_finite()) {
                    return Err(Error::Validation(format!(
                        "matrix: lambda_max {lambda_max} must be finite and non-negative"
                    )));
                }
                MatrixField::from_fn(*grid, |x| {
                    let r = center
                        .iter()
                        .zip(x)
                        .map(|(c, y)| (y - c).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let small = r.powf(*alpha);
                    if n == 1 {
                        vec![small]
                    } else {
                        vec![*lambda_max, 0.0, 0.0, small]
                    }
                })
            }
            MatrixSpec::Table { entries } => {
                check_len(entries.len(), grid.len() * n * n, "matrix", "entries")?;
                MatrixField::new(*grid, entries.clone())
            }
        }
    }
}

fn check_len(got: usize, want: usize, what: &str, field: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what}: `{field}` has {got} entries, expected {want}"
        )))
    }
}

fn piecewise(
    grid: &Grid,
    axis: usize,
    breakpoints: &[f64],
    values: &[f64],
    what: &str,
) -> Result<Vec<f64>> {
    if axis >= grid.dim() {
        return Err(Error::Config(format!(
            "{what}: axis {axis} out of range for a {}D grid",
            grid.dim()
        )));
    }
    check_len(values.len(), breakpoints.len() + 1, what, "values")?;
    if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite()) {
        return Err(Error::Config(format!(
            "{what}: breakpoints must be finite and strictly increasing"
        )));
    }
    Ok(grid
        .centers()
        .map(|x| values[breakpoints.iter().filter(|&&b| b <= x[axis]).count()])
        .collect())
}

/// The validated fields of a configuration.
#[derive(Clone, Debug)]
pub struct Fields {
    pub grid: Grid,
    pub p: ExponentField,
    pub v: ScalarField,
    pub q: MatrixField,
    pub f: ScalarField,
}

impl Fields {
    /// Checks the solver admissibility rules on top of the field rules.
    pub fn problem(&self) -> Result<ProblemData> {
        ProblemData::new(self.p.clone(), self.v.clone(), self.q.clone(), self.f.clone())
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn build(&self) -> Result<Fields> {
        let cells = self
            .domain
            .resolution
            .iter()
            .try_fold(1usize, |a, &m| a.checked_mul(m))
            .filter(|&c| c <= MAX_CELLS);
        if cells.is_none() {
            return Err(Error::Config(format!(
                "resolution {:?} exceeds {MAX_CELLS} cells",
                self.domain.resolution
            )));
        }
        let extents: Vec<(f64, f64)> = self.domain.extents.iter().map(|e| (e[0], e[1])).collect();
        let grid = build_grid(&extents, &self.domain.resolution)?;
        let p = self.exponent.build(&grid)?;
        let v = self.weight.build(&grid, "weight")?;
        if let Some(i) = v.values().iter().position(|&x| x < 0.0) {
            return Err(Error::Validation(format!(
                "weight is negative at cell {i}"
            )));
        }
        let q = self.matrix.build(&grid)?;
        let f = self.datum.build(&grid, "datum")?;
        Ok(Fields { grid, p, v, q, f })
    }

    pub fn solver_options(&self, tol_override: Option<f64>) -> SolverOptions {
        let mut opts = SolverOptions {
            tol: tol_override.or(self.solver.tol),
            ..SolverOptions::default()
        };
        if let Some(s) = &self.solver.eps_schedule {
            opts.eps_schedule = s.clone();
        }
        if let Some(m) = self.solver.max_iters {
            opts.max_iters = m;
        }
        opts
    }

    pub fn poincare_options(&self, seed: u64) -> PoincareOptions {
        let mut opts = PoincareOptions {
            seed,
            ..PoincareOptions::default()
        };
        if let Some(r) = self.poincare.restarts {
            opts.restarts = r;
        }
        if let Some(m) = self.poincare.max_iters {
            opts.max_iters = m;
        }
        opts
    }

    /// `(0, 1)` with 64 cells, `p = 2 + x`, unit weight and matrix,
    /// `f = cos(pi x)`.
    pub fn default_verify() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            domain: DomainSpec {
                extents: vec![[0.0, 1.0]],
                resolution: vec![64],
            },
            exponent: ExponentSpec::Affine {
                offset: 2.0,
                slope: vec![1.0],
            },
            weight: ScalarSpec::one(),
            matrix: MatrixSpec::Identity,
            datum: ScalarSpec::Cosine {
                amplitude: 1.0,
                frequency: vec![1.0],
            },
            solver: SolverConfig::default(),
            poincare: PoincareConfig::default(),
            verify: VerifyConfig::default(),
            output_dir: None,
        }
    }
}
