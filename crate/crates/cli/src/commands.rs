//! The five subcommands. Each reads its inputs, calls the library, and
//! writes deterministic outputs under the run directory.

use std::path::Path;

use minimax_core::bvp::{assemble_coefficients, DaeEstimator};
use minimax_core::descriptor::svd_canonical_form;
use minimax_core::oracle::RefinementStudy;
use minimax_core::synth::{energy_scale, rng_from_seed, FourierSignal, DEFAULT_HARMONICS};
use minimax_core::{CanonicalDescriptor, DescriptorSystem, EstimationProblem, Outcome, TimeGrid, Trajectory};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{RunConfig, System};
use crate::error::{CliError, Result};
use crate::io::{self, fmt_real, to_rows, MatrixRows, NamedVectors};

/// `cond(Sigma_r)` above which the canonical uncertainty ball is flagged
/// as a distorted image of the original one.
pub const SIGMA_CONDITION_WARNING: f64 = 1e3;

/// Largest `x_l2` difference treated as exact agreement by `verify`.
pub const TRIVIAL_DIFFERENCE: f64 = 1e-10;

/// Smallest fitted convergence order accepted by `verify`.
pub const MIN_VERIFY_ORDER: f64 = 1.5;

#[derive(Debug, Serialize)]
pub struct CanonicalFile {
    #[serde(rename = "F")]
    pub f: MatrixRows,
    #[serde(rename = "C")]
    pub c: MatrixRows,
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub r: usize,
    #[serde(rename = "Sigma_r")]
    pub sigma_r: Vec<f64>,
    #[serde(rename = "cond_Sigma_r")]
    pub cond_sigma_r: f64,
    #[serde(rename = "U")]
    pub u: MatrixRows,
    #[serde(rename = "V")]
    pub v: MatrixRows,
    #[serde(rename = "C1")]
    pub c1: MatrixRows,
    #[serde(rename = "C2")]
    pub c2: MatrixRows,
    #[serde(rename = "C3")]
    pub c3: MatrixRows,
    #[serde(rename = "C4")]
    pub c4: MatrixRows,
}

impl CanonicalFile {
    pub fn new(system: &DescriptorSystem, can: &CanonicalDescriptor) -> Self {
        Self {
            f: to_rows(&system.f),
            c: to_rows(&system.c),
            t0: system.t0,
            t_end: system.t_end,
            r: can.rank,
            sigma_r: can.sigma_r.iter().copied().collect(),
            cond_sigma_r: can.sigma_condition(),
            u: to_rows(&can.u),
            v: to_rows(&can.v),
            c1: to_rows(&can.c1),
            c2: to_rows(&can.c2),
            c3: to_rows(&can.c3),
            c4: to_rows(&can.c4),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DirectionRow {
    pub name: String,
    pub sigma: Option<f64>,
    pub d_hat: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct WorstRow {
    pub value: Option<f64>,
    pub sigma_max: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct Results {
    pub consistency: f64,
    pub factor: Option<f64>,
    pub directional_errors: Vec<DirectionRow>,
    pub worst_case: Option<WorstRow>,
}

#[derive(Debug, Serialize)]
pub struct VerifyRow {
    pub intervals: usize,
    pub x_l2: f64,
    pub x_max: f64,
    pub q_l2: f64,
    pub q_max: f64,
    pub consistency_rel: f64,
    pub factor_rel: f64,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub reports: Vec<VerifyRow>,
    pub pairwise_orders: Vec<f64>,
    pub fitted_order: f64,
    pub decreasing: bool,
    pub trivial: bool,
    pub passed: bool,
}

/// Options shared by `estimate` and `error` for direction tables.
#[derive(Debug, Default, Clone)]
pub struct DirectionOptions<'a> {
    pub directions: Option<&'a Path>,
    pub worst_case: bool,
    pub keep_going: bool,
}

fn reduce_system(cfg: &RunConfig, command: &str) -> Result<(DescriptorSystem, CanonicalDescriptor)> {
    let system = cfg.descriptor(command)?.clone();
    let can = svd_canonical_form(&system, cfg.rank_tol)?;
    let cond = can.sigma_condition();
    if cond > SIGMA_CONDITION_WARNING {
        eprintln!(
            "warning: cond(Sigma_r) = {cond:.3e} exceeds {SIGMA_CONDITION_WARNING:e}; \
             the canonical uncertainty ball distorts the original one"
        );
    }
    Ok((system, can))
}

fn grid_for(can: &CanonicalDescriptor, intervals: usize) -> Result<TimeGrid> {
    Ok(TimeGrid::new(can.t0, can.t_end, intervals)?)
}

fn constant(grid: TimeGrid, v: &DVector<f64>) -> Trajectory {
    Trajectory::from_fn(grid, v.len(), |_| v.clone()).expect("dimension is consistent")
}

fn check_directions(table: &NamedVectors, n: usize) -> Result<()> {
    if let Some((name, v)) = table.names.iter().zip(&table.vectors).find(|(_, v)| v.len() != n) {
        return Err(CliError::Input(format!(
            "direction '{name}' has {} components, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

fn opt(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".to_string(), fmt_real)
}

/// Observations on the model horizon, resampled when `grid` differs from
/// the file.
fn load_observations(path: &Path, can: &CanonicalDescriptor, grid: Option<usize>) -> Result<Trajectory> {
    let y = io::read_trajectory(path)?;
    if y.dim() != can.n() {
        return Err(CliError::Input(format!(
            "{}: {} components, model has {}",
            path.display(),
            y.dim(),
            can.n()
        )));
    }
    let span = (can.t_end - can.t0).abs();
    let g = y.grid();
    if (g.t0() - can.t0).abs() > 1e-12 * span.max(1.0) || (g.t_end() - can.t_end).abs() > 1e-12 * span.max(1.0) {
        return Err(CliError::Input(format!(
            "{}: observations cover [{}, {}], model horizon is [{}, {}]",
            path.display(),
            g.t0(),
            g.t_end(),
            can.t0,
            can.t_end
        )));
    }
    let target = grid_for(can, grid.unwrap_or(g.intervals()))?;
    Ok(y.resample(target))
}

pub fn reduce(cfg: &RunConfig) -> Result<()> {
    let (system, can) = reduce_system(cfg, "reduce")?;
    io::ensure_dir(&cfg.out)?;
    io::write_json(&cfg.out.join("canonical.json"), &CanonicalFile::new(&system, &can))?;
    println!("rank {} of {}, cond(Sigma_r) = {}", can.rank, can.n(), fmt_real(can.sigma_condition()));
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    seed: u64,
    intervals: usize,
    rho: f64,
    energy: f64,
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let (_, can) = reduce_system(cfg, "simulate")?;
    let grid = grid_for(&can, cfg.grid)?;
    let n = can.n();
    let mut rng = rng_from_seed(cfg.seed);
    let f = FourierSignal::random(&mut rng, n, DEFAULT_HARMONICS, can.t0, can.t_end).sample(grid);
    let eta = FourierSignal::random(&mut rng, n, DEFAULT_HARMONICS, can.t0, can.t_end).sample(grid);
    let alpha = energy_scale(&[&f, &eta], cfg.rho)?;
    let (f, eta) = (f.scaled(alpha), eta.scaled(alpha));
    let energy = f.inner(&f)? + eta.inner(&eta)?;

    let x = can.from_canonical(&can.simulate(&f)?)?;
    let y = x.add(&eta)?;

    io::ensure_dir(&cfg.out)?;
    io::write_trajectory(&cfg.out.join("truth.csv"), &x)?;
    io::write_trajectory(&cfg.out.join("obs.csv"), &y)?;
    io::write_trajectory(&cfg.out.join("forcing.csv"), &f)?;
    io::write_trajectory(&cfg.out.join("noise.csv"), &eta)?;
    io::write_json(
        &cfg.out.join("simulate.json"),
        &SimulateSummary {
            seed: cfg.seed,
            intervals: cfg.grid,
            rho: cfg.rho,
            energy,
        },
    )?;
    println!("simulated {} nodes, energy {}", grid.len(), fmt_real(energy));
    Ok(())
}

pub fn estimate(cfg: &RunConfig, obs: &Path, grid: Option<usize>, opts: &DirectionOptions) -> Result<()> {
    match &cfg.system {
        System::Static(problem) => estimate_static(cfg, problem, obs, opts),
        System::Descriptor(_) => estimate_descriptor(cfg, obs, grid, opts),
    }
}

fn estimate_descriptor(cfg: &RunConfig, obs: &Path, grid: Option<usize>, opts: &DirectionOptions) -> Result<()> {
    let (_, can) = reduce_system(cfg, "estimate")?;
    let y = can.to_canonical(&load_observations(obs, &can, grid)?)?;
    let estimator = DaeEstimator::new(&can, *y.grid())?;
    let est = estimator.estimate(&y)?;

    let mut rows = Vec::new();
    if let Some(path) = opts.directions {
        let table = io::read_named_vectors(path)?;
        check_directions(&table, can.n())?;
        for (name, v) in table.names.iter().zip(&table.vectors) {
            let sigma = estimator.directional_error(&constant(*y.grid(), &can.v.tr_mul(v)))?.value;
            rows.push(DirectionRow {
                name: name.clone(),
                sigma: Some(sigma),
                d_hat: Some(est.factor * sigma),
            });
        }
    }
    let worst_case = if opts.worst_case {
        let w = estimator.worst_case_error(&y, cfg.power_tol, cfg.power_max_iter)?;
        Some(WorstRow {
            value: Some(w.value),
            sigma_max: Some(w.lambda_max.sqrt()),
            iterations: w.iterations,
            converged: w.converged,
        })
    } else {
        None
    };

    io::ensure_dir(&cfg.out)?;
    io::write_trajectory(&cfg.out.join("xhat.csv"), &can.from_canonical(&est.x_hat)?)?;
    io::write_trajectory(&cfg.out.join("qhat.csv"), &est.q_hat)?;
    let results = Results {
        consistency: est.consistency,
        factor: Some(est.factor),
        directional_errors: rows,
        worst_case,
    };
    io::write_json(&cfg.out.join("results.json"), &results)?;
    print_results(&results);
    Ok(())
}

fn estimate_static(cfg: &RunConfig, problem: &EstimationProblem, obs: &Path, opts: &DirectionOptions) -> Result<()> {
    let y = io::read_vector(obs)?;
    let table = match opts.directions {
        Some(path) => {
            let t = io::read_named_vectors(path)?;
            check_directions(&t, problem.n())?;
            t
        }
        None => NamedVectors {
            names: Vec::new(),
            vectors: Vec::new(),
        },
    };
    let res = problem.aposteriori_estimate(&y, &table.vectors)?;
    let mut rows = Vec::new();
    for (i, (name, ell)) in table.names.iter().zip(&table.vectors).enumerate() {
        let sigma = static_sigma(problem, name, ell, opts.keep_going)?;
        let d_hat = res.radius.get(i).copied().and_then(opt);
        rows.push(DirectionRow {
            name: name.clone(),
            sigma,
            d_hat,
        });
    }
    let worst_case = if opts.worst_case {
        Some(static_worst(problem, res.factor, opts.keep_going)?)
    } else {
        None
    };

    io::ensure_dir(&cfg.out)?;
    io::write_text(&cfg.out.join("phi_hat.csv"), &io::vector_csv(&res.phi_hat))?;
    io::write_text(&cfg.out.join("q_hat.csv"), &io::vector_csv(&res.q_hat))?;
    let results = Results {
        consistency: res.consistency,
        factor: res.factor,
        directional_errors: rows,
        worst_case,
    };
    io::write_json(&cfg.out.join("results.json"), &results)?;
    print_results(&results);
    Ok(())
}

fn static_sigma(problem: &EstimationProblem, name: &str, ell: &DVector<f64>, keep_going: bool) -> Result<Option<f64>> {
    match problem.solve_euler(ell)? {
        Outcome::Finite(sol) => Ok(Some(sol.sigma)),
        Outcome::Infinite(report) if keep_going => {
            eprintln!("warning: direction '{name}' is inadmissible (distance {:e})", report.residual_norm);
            Ok(None)
        }
        Outcome::Infinite(report) => Err(CliError::Inadmissible {
            name: name.to_string(),
            residual: report.residual_norm,
        }),
    }
}

fn static_worst(problem: &EstimationProblem, factor: Option<f64>, keep_going: bool) -> Result<WorstRow> {
    match problem.worst_direction()? {
        Outcome::Finite(w) => Ok(WorstRow {
            value: factor.map(|k| k * w.sigma_max),
            sigma_max: Some(w.sigma_max),
            iterations: w.iterations,
            converged: true,
        }),
        Outcome::Infinite(_) if keep_going => {
            eprintln!("warning: the worst-case error is unbounded");
            Ok(WorstRow {
                value: None,
                sigma_max: None,
                iterations: 0,
                converged: true,
            })
        }
        Outcome::Infinite(report) => Err(CliError::Inadmissible {
            name: "worst_case".into(),
            residual: report.residual_norm,
        }),
    }
}

fn print_results(results: &Results) {
    println!("consistency {}", fmt_real(results.consistency));
    println!("factor {}", fmt_opt(results.factor));
    for row in &results.directional_errors {
        println!("{} sigma {} d_hat {}", row.name, fmt_opt(row.sigma), fmt_opt(row.d_hat));
    }
    if let Some(w) = &results.worst_case {
        println!("worst_case {}", fmt_opt(w.value));
    }
}

/// A priori errors `sigma(ell)` for a direction table, plus the largest one.
pub fn error_table(cfg: &RunConfig, opts: &DirectionOptions) -> Result<()> {
    if opts.directions.is_none() && !opts.worst_case {
        return Err(CliError::Input("'error' needs --directions, --worst-case, or both".into()));
    }
    let mut table = String::from("name,sigma\n");
    let mut push = |name: &str, sigma: Option<f64>| table.push_str(&format!("{name},{}\n", fmt_opt(sigma)));

    match &cfg.system {
        System::Static(problem) => {
            if let Some(path) = opts.directions {
                let t = io::read_named_vectors(path)?;
                check_directions(&t, problem.n())?;
                for (name, ell) in t.names.iter().zip(&t.vectors) {
                    push(name, static_sigma(problem, name, ell, opts.keep_going)?);
                }
            }
            if opts.worst_case {
                push("worst_case", static_worst(problem, Some(1.0), opts.keep_going)?.sigma_max);
            }
        }
        System::Descriptor(_) => {
            let (_, can) = reduce_system(cfg, "error")?;
            let grid = grid_for(&can, cfg.grid)?;
            let estimator = DaeEstimator::new(&can, grid)?;
            if let Some(path) = opts.directions {
                let t = io::read_named_vectors(path)?;
                check_directions(&t, can.n())?;
                for (name, v) in t.names.iter().zip(&t.vectors) {
                    let sigma = estimator.directional_error(&constant(grid, &can.v.tr_mul(v)))?.value;
                    push(name, Some(sigma));
                }
            }
            if opts.worst_case {
                let w = estimator.worst_case_error(&Trajectory::zeros(grid, can.n()), cfg.power_tol, cfg.power_max_iter)?;
                push("worst_case", Some(w.value));
                io::ensure_dir(&cfg.out)?;
                io::write_trajectory(&cfg.out.join("worst_direction.csv"), &can.from_canonical(&w.ell_star)?)?;
            }
        }
    }
    io::ensure_dir(&cfg.out)?;
    io::write_text(&cfg.out.join("errors.csv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn parse_refine(spec: &str) -> Result<Vec<usize>> {
    let sizes = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Input(format!("--refine: '{s}' is not a grid size")))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.len() < 2 || sizes[0] < 2 || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Input(format!(
            "--refine needs at least two increasing sizes >= 2, got '{spec}'"
        )));
    }
    Ok(sizes)
}

/// BVP against the discretized oracle on nested grids.
pub fn verify(cfg: &RunConfig, obs: Option<&Path>, intervals: &[usize], corrupt_sign: bool) -> Result<()> {
    let (_, can) = reduce_system(cfg, "verify")?;
    let mut coeffs = assemble_coefficients(&can);
    if corrupt_sign {
        coeffs.corrupt_observation_sign();
    }
    let finest = grid_for(&can, *intervals.last().expect("validated refinement"))?;
    let study = match obs {
        Some(path) => {
            let y = can.to_canonical(&load_observations(path, &can, None)?)?;
            RefinementStudy::run(&can, &coeffs, intervals, |g| Ok(y.resample(g)))?
        }
        None => {
            let signal = FourierSignal::random(
                &mut rng_from_seed(cfg.seed),
                can.n(),
                DEFAULT_HARMONICS,
                can.t0,
                can.t_end,
            );
            let alpha = energy_scale(&[&signal.sample(finest)], cfg.rho)?;
            let signal = signal.scaled(alpha);
            RefinementStudy::run(&can, &coeffs, intervals, |g| Ok(signal.sample(g)))?
        }
    };

    let trivial = study.max_x_l2() <= TRIVIAL_DIFFERENCE;
    let decreasing = study.decreasing();
    let passed = trivial || (decreasing && study.fitted_order >= MIN_VERIFY_ORDER);
    let report = VerifyReport {
        reports: study
            .reports
            .iter()
            .map(|r| VerifyRow {
                intervals: r.intervals,
                x_l2: r.x_l2,
                x_max: r.x_max,
                q_l2: r.q_l2,
                q_max: r.q_max,
                consistency_rel: r.consistency_rel,
                factor_rel: r.factor_rel,
            })
            .collect(),
        pairwise_orders: study.pairwise_orders.clone(),
        fitted_order: study.fitted_order,
        decreasing,
        trivial,
        passed,
    };
    io::ensure_dir(&cfg.out)?;
    io::write_json(&cfg.out.join("verify.json"), &report)?;

    println!("N,x_l2,q_l2,consistency_rel");
    for r in &report.reports {
        println!("{},{},{},{}", r.intervals, fmt_real(r.x_l2), fmt_real(r.q_l2), fmt_real(r.consistency_rel));
    }
    println!("fitted order {}", fmt_real(report.fitted_order));
    if passed {
        println!("verify: passed");
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "fitted order {:.3} (minimum {MIN_VERIFY_ORDER}), decreasing: {decreasing}",
            report.fitted_order
        )))
    }
}
