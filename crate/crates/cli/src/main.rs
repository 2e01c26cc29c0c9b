#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use genfrac_core::ErrorKind;

mod commands;
mod config;
mod output;
mod parse;

use config::Params;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(genfrac_core::Error),
    /// A check ran but did not pass.
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::Failed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<genfrac_core::Error> for CliError {
    fn from(e: genfrac_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "genfrac",
    version,
    about = "Generalized fractional equations driven by subordinator paths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key = value file (or a manifest from an earlier run)
    #[arg(long)]
    config: Option<PathBuf>,
    /// directory for the artifacts and manifest.json; stdout otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo sample count
    #[arg(long)]
    samples: Option<String>,
    /// master seed (falls back to GENFRAC_SEED, then 0)
    #[arg(long)]
    seed: Option<String>,
    /// plain truncation cutoff for infinite measures
    #[arg(long)]
    eps: Option<String>,
    /// worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// also write an SVG plot of solution curves
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generalized Mittag-Leffler values E_(ν),z(-λ) or E_(ν),z(A)
    Ml {
        #[command(flatten)]
        args: commands::MlArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Potential masses U_λ([0, z])
    Potential {
        #[command(flatten)]
        args: commands::PotentialArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Sample subordinator paths
    Simulate {
        #[command(flatten)]
        args: commands::SimulateArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Constant-coefficient boundary problem
    SolveConst {
        #[command(flatten)]
        args: commands::ConstArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Boundary problem or resolvent with an x-dependent generator
    SolveTimedep {
        #[command(flatten)]
        args: commands::TimedepArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Periodic pseudo-differential problem solved mode by mode
    SolvePsido {
        #[command(flatten)]
        args: commands::PsidoArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Residual report for a solution curve
    Verify {
        #[command(flatten)]
        args: commands::VerifyArgs,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Ml { common, .. } => ("ml", common),
        Command::Potential { common, .. } => ("potential", common),
        Command::Simulate { common, .. } => ("simulate", common),
        Command::SolveConst { common, .. } => ("solve-const", common),
        Command::SolveTimedep { common, .. } => ("solve-timedep", common),
        Command::SolvePsido { common, .. } => ("solve-psido", common),
        Command::Verify { common, .. } => ("verify", common),
    };
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--workers: {e}")))?;
    }
    let mut params = Params::load(common.config.as_deref(), name)?;
    params.set("samples", common.samples.as_ref());
    params.set("seed", common.seed.as_ref());
    params.set("eps", common.eps.as_ref());
    let mut sink = output::Sink::new(common.out.clone());
    let meta = match &cli.command {
        Command::Ml { args, .. } => commands::ml(args, &mut params, &mut sink)?,
        Command::Potential { args, .. } => commands::potential(args, &mut params, &mut sink)?,
        Command::Simulate { args, .. } => commands::simulate(args, &mut params, &mut sink)?,
        Command::SolveConst { args, .. } => {
            commands::solve_const(args, &mut params, &mut sink, common.svg)?
        }
        Command::SolveTimedep { args, .. } => {
            commands::solve_timedep(args, &mut params, &mut sink, common.svg)?
        }
        Command::SolvePsido { args, .. } => commands::solve_psido(args, &mut params, &mut sink)?,
        Command::Verify { args, .. } => commands::verify(args, &mut params, &mut sink)?,
    };
    let failed = meta.1.clone();
    sink.finish(name, &params, meta.0)?;
    match failed {
        Some(msg) => Err(CliError::Failed(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("genfrac: {e}");
            ExitCode::from(e.code())
        }
    }
}
