//! Run configuration: a JSON file naming the system, with optional numeric
//! settings that command-line flags override.

use std::path::{Path, PathBuf};

use minimax_core::bvp::{DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL};
use minimax_core::descriptor::DEFAULT_RANK_TOL;
use minimax_core::operator::DEFAULT_ADMISSIBILITY_TOL;
use minimax_core::{DescriptorSystem, EstimationProblem};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::io::{from_rows, read_json, MatrixRows};

pub const DEFAULT_GRID: usize = 64;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_RHO: f64 = 0.9;

/// On-disk configuration. Either a descriptor model (`F`, `C`, `t0`, `T`),
/// a static problem (`L`, `H`), or `model` pointing at a file holding one.
#[derive(Debug, Default, Clone, Deserialize)]
pub struct ConfigFile {
    pub model: Option<PathBuf>,
    #[serde(rename = "F")]
    pub f: Option<MatrixRows>,
    #[serde(rename = "C")]
    pub c: Option<MatrixRows>,
    pub t0: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<MatrixRows>,
    #[serde(rename = "H")]
    pub h: Option<MatrixRows>,
    pub radius_f: Option<f64>,
    pub radius_eta: Option<f64>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub rho: Option<f64>,
    pub rank_tol: Option<f64>,
    pub admissibility_tol: Option<f64>,
    pub power_tol: Option<f64>,
    pub power_max_iter: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum System {
    Descriptor(DescriptorSystem),
    Static(EstimationProblem),
}

/// Settings after merging file values, flags and defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: System,
    pub grid: usize,
    pub seed: u64,
    pub rho: f64,
    pub rank_tol: f64,
    pub admissibility_tol: f64,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub out: PathBuf,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub rho: Option<f64>,
    pub rank_tol: Option<f64>,
    pub admissibility_tol: Option<f64>,
    pub power_tol: Option<f64>,
    pub radius_f: Option<f64>,
    pub radius_eta: Option<f64>,
    pub out: PathBuf,
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::Input(format!("{name} must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path, flags: Overrides) -> Result<Self> {
        let file: ConfigFile = read_json(path)?;
        let model = match &file.model {
            Some(rel) => {
                let base = path.parent().unwrap_or(Path::new("."));
                let inner: ConfigFile = read_json(&base.join(rel))?;
                if inner.model.is_some() {
                    return Err(CliError::Input("nested 'model' references are not supported".into()));
                }
                inner
            }
            None => file.clone(),
        };
        Self::resolve(&file, &model, flags)
    }

    fn resolve(file: &ConfigFile, model: &ConfigFile, flags: Overrides) -> Result<Self> {
        let pick_f = |flag: Option<f64>, a: Option<f64>, b: Option<f64>, default: f64| flag.or(a).or(b).unwrap_or(default);
        let radius_f = positive("radius_f", pick_f(flags.radius_f, file.radius_f, model.radius_f, 1.0))?;
        let radius_eta = positive("radius_eta", pick_f(flags.radius_eta, file.radius_eta, model.radius_eta, 1.0))?;
        let admissibility_tol = positive(
            "admissibility tolerance",
            pick_f(flags.admissibility_tol, file.admissibility_tol, model.admissibility_tol, DEFAULT_ADMISSIBILITY_TOL),
        )?;

        let system = match (&model.f, &model.c, &model.l, &model.h) {
            (Some(f), Some(c), None, None) => {
                if radius_f != 1.0 || radius_eta != 1.0 {
                    return Err(CliError::Input(
                        "descriptor models use the unit uncertainty ball; radii apply to static problems only".into(),
                    ));
                }
                let f = from_rows("F", f, None)?;
                let c = from_rows("C", c, None)?;
                let t0 = model.t0.ok_or_else(|| CliError::Input("model is missing 't0'".into()))?;
                let t_end = model.t_end.ok_or_else(|| CliError::Input("model is missing 'T'".into()))?;
                System::Descriptor(DescriptorSystem::new(f, c, t0, t_end)?)
            }
            (None, None, Some(l), Some(h)) => {
                let l = from_rows("L", l, None)?;
                let h = from_rows("H", h, None)?;
                System::Static(
                    EstimationProblem::new(l, h)?
                        .with_radii(radius_f, radius_eta)?
                        .with_admissibility_tol(admissibility_tol)?,
                )
            }
            _ => {
                return Err(CliError::Input(
                    "model needs either 'F' and 'C' (descriptor) or 'L' and 'H' (static)".into(),
                ))
            }
        };

        let grid = flags.grid.or(file.grid).or(model.grid).unwrap_or(DEFAULT_GRID);
        if grid < 2 {
            return Err(CliError::Input(format!("grid must have at least 2 intervals, got {grid}")));
        }
        let rho = pick_f(flags.rho, file.rho, model.rho, DEFAULT_RHO);
        if !(0.0..=1.0).contains(&rho) {
            return Err(CliError::Input(format!("rho must lie in [0, 1], got {rho}")));
        }
        let power_max_iter = file.power_max_iter.or(model.power_max_iter).unwrap_or(DEFAULT_POWER_MAX_ITER);
        if power_max_iter == 0 {
            return Err(CliError::Input("power_max_iter must be positive".into()));
        }
        Ok(Self {
            system,
            grid,
            seed: flags.seed.or(file.seed).or(model.seed).unwrap_or(DEFAULT_SEED),
            rho,
            rank_tol: positive("rank tolerance", pick_f(flags.rank_tol, file.rank_tol, model.rank_tol, DEFAULT_RANK_TOL))?,
            admissibility_tol,
            power_tol: positive("power tolerance", pick_f(flags.power_tol, file.power_tol, model.power_tol, DEFAULT_POWER_TOL))?,
            power_max_iter,
            out: flags.out,
        })
    }

    pub fn descriptor(&self, command: &str) -> Result<&DescriptorSystem> {
        match &self.system {
            System::Descriptor(d) => Ok(d),
            System::Static(_) => Err(CliError::Input(format!("'{command}' requires a descriptor model"))),
        }
    }
}
