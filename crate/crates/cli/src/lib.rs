//! Command-line front end for guaranteed estimation of linear descriptor
//! systems: model reduction, synthetic data, estimation runs, error tables
//! and oracle verification.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{exit, CliError, Result};

use commands::DirectionOptions;
use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "minimax", version, about = "Guaranteed state estimation for linear descriptor systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the SVD canonical form of a model.
    Reduce(Common),
    /// Draw a seeded forcing and noise inside the unit ball and simulate.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Energy of the generated (f, eta) pair, in [0, 1].
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Minimax estimate from observations, with optional error table.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        obs: PathBuf,
        #[command(flatten)]
        dirs: DirectionFlags,
    },
    /// Tabulate a priori errors for directions and the worst case.
    Error {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dirs: DirectionFlags,
    },
    /// Compare the BVP solver against the discretized oracle over nested grids.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Observations to resample; a seeded smooth signal otherwise.
        #[arg(long, value_name = "PATH")]
        obs: Option<PathBuf>,
        #[arg(long, default_value = "32,64,128", value_name = "N1,N2,...")]
        refine: String,
        /// Energy of the synthesized observations, in [0, 1].
        #[arg(long)]
        rho: Option<f64>,
        /// Flip the sign of the observation coupling (failure-path check).
        #[arg(long, hide = true)]
        corrupt_sign: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Number of grid intervals.
    #[arg(long, value_name = "N")]
    pub grid: Option<usize>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rank_tol: Option<f64>,
    #[arg(long)]
    pub adm_tol: Option<f64>,
    #[arg(long)]
    pub power_tol: Option<f64>,
    #[arg(long)]
    pub radius_f: Option<f64>,
    #[arg(long)]
    pub radius_eta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DirectionFlags {
    /// CSV with header `name,v1,...,vn`; each row is a direction.
    #[arg(long, value_name = "PATH")]
    pub directions: Option<PathBuf>,
    #[arg(long)]
    pub worst_case: bool,
    /// Report inadmissible directions as `inf` instead of failing.
    #[arg(long)]
    pub keep_going: bool,
}

impl DirectionFlags {
    fn options(&self) -> DirectionOptions<'_> {
        DirectionOptions {
            directions: self.directions.as_deref(),
            worst_case: self.worst_case,
            keep_going: self.keep_going,
        }
    }
}

fn load(common: &Common, rho: Option<f64>) -> Result<RunConfig> {
    RunConfig::load(
        &common.config,
        Overrides {
            grid: common.grid,
            seed: common.seed,
            rho,
            rank_tol: common.rank_tol,
            admissibility_tol: common.adm_tol,
            power_tol: common.power_tol,
            radius_f: common.radius_f,
            radius_eta: common.radius_eta,
            out: common.out.clone(),
        },
    )
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reduce(common) => commands::reduce(&load(&common, None)?),
        Command::Simulate { common, rho } => commands::simulate(&load(&common, rho)?),
        Command::Estimate { common, obs, dirs } => {
            commands::estimate(&load(&common, None)?, &obs, common.grid, &dirs.options())
        }
        Command::Error { common, dirs } => commands::error_table(&load(&common, None)?, &dirs.options()),
        Command::Verify {
            common,
            obs,
            refine,
            rho,
            corrupt_sign,
        } => {
            let intervals = commands::parse_refine(&refine)?;
            commands::verify(&load(&common, rho)?, obs.as_deref(), &intervals, corrupt_sign)
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::INPUT } else { exit::OK };
        }
    };
    match execute(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
