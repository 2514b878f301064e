mod commands;
mod error;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use commands::Context;
use dualmerit::lp::{Mode, Tolerances, DEFAULT_BACKEND};
use error::CliError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Solve sector-coupled energy-system LPs and reconstruct the merit order from their duals.
///
/// Exit codes: 0 success, 1 validation or usage error, 2 infeasible or unbounded,
/// 3 backend failure or failed numeric check.
#[derive(Parser)]
#[command(name = "dualmerit", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// LP backend.
    #[arg(long, global = true, env = "DUALMERIT_BACKEND", default_value = DEFAULT_BACKEND)]
    backend: String,
    /// Worker threads for analytics and the solver.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Primal feasibility and duality gap tolerance.
    #[arg(long = "tol-feas", global = true, default_value_t = 1e-6)]
    tol_feas: f64,
    /// Stationarity residual tolerance.
    #[arg(long = "tol-stat", global = true, default_value_t = 1e-5)]
    tol_stat: f64,
    /// Seed for randomised instances.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(value_name = "CONFIG", required_unless_present = "config_flag")]
    config: Option<PathBuf>,
    #[arg(long = "config", value_name = "CONFIG", conflicts_with = "config")]
    config_flag: Option<PathBuf>,
}

impl ConfigArg {
    fn path(&self) -> &Path {
        self.config
            .as_deref()
            .or(self.config_flag.as_deref())
            .expect("clap enforces a config path")
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Solve a model and write prices, dispatch, capacities, duals and a KKT report.
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "expansion", value_parser = parse_mode)]
        mode: Mode,
        /// Capacity table (component, capacity) for dispatch_only runs.
        #[arg(long)]
        capacities: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Reconstruct bids, price setters and curves from a solved directory.
    Analyze {
        solved: PathBuf,
        /// Carrier whose market is analysed; defaults to electricity.
        #[arg(long = "market-carrier")]
        market_carrier: Option<String>,
        /// MW per averaged-curve bin.
        #[arg(long = "bin-width", default_value_t = 1.0)]
        bin_width: f64,
        /// Output directory; defaults to <SOLVED>/analysis.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a myopic multi-year pathway.
    Pathway {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long = "market-carrier")]
        market_carrier: Option<String>,
        /// Also re-solve each year dispatch-only and compare.
        #[arg(long = "with-st")]
        with_st: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check LP prices against the curve-intersection oracle on random instances.
    Fuzz {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "inject-failure", hide = true)]
        inject_failure: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    if !(g.tol_feas > 0.0 && g.tol_stat > 0.0) {
        return Err(CliError::Usage("tolerances must be positive".into()));
    }
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Context {
        backend: g.backend,
        threads: g.threads,
        tolerances: Tolerances {
            feasibility: g.tol_feas,
            stationarity: g.tol_stat,
        },
        seed: g.seed,
    };
    match cli.command {
        Command::Validate { config } => commands::cmd_validate(config.path()),
        Command::Solve {
            config,
            mode,
            capacities,
            out,
        } => commands::cmd_solve(&ctx, config.path(), mode, capacities.as_deref(), &out),
        Command::Analyze {
            solved,
            market_carrier,
            bin_width,
            out,
        } => commands::cmd_analyze(&ctx, &solved, market_carrier.as_deref(), bin_width, out.as_deref()),
        Command::Pathway {
            config,
            market_carrier,
            with_st,
            out,
        } => commands::cmd_pathway(&ctx, config.path(), market_carrier.as_deref(), with_st, &out),
        Command::Fuzz {
            n,
            out,
            inject_failure,
        } => commands::cmd_fuzz(&ctx, n, inject_failure, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.exit(),
    }
}
