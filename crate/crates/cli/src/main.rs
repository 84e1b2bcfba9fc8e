use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lookahes_cli::{cmd_run, cmd_sweep, cmd_validate, CliError, GridAxis, RunArgs, Suite, SweepArgs};

/// Cost-aware nonmyopic Bayesian optimization experiments.
///
/// Configuration files are TOML with the tables [env], [cost],
/// [acquisition], [surrogate], [policy] and [run]; unknown keys are
/// rejected. Every key is optional. Main defaults: env.name = "ackley2",
/// env.noise_sigma = 0, env.blur_radius = 50, env.syngp_lengthscale = 0.5;
/// cost.kind = "euclidean", cost.k = 1, cost.r = 0, cost.lambda = 1;
/// acquisition.kind = "lookahes", horizon = 20, restarts = 64,
/// n_features = 1024, mc_samples = 8192, beta = 2, tau = 0.1,
/// grad_steps = 200; surrogate.kernel = "matern52" with 200 Adam steps at
/// lr 0.05; policy.hidden = 64, lr = 0.001, vmf_kappa = 0,
/// vmf_magnitude = 0.05, warmup = true; run.n_init = 10, n_steps = 20,
/// seeds = [0].
///
/// Exit codes: 0 success, 1 failed checks, 2 configuration error,
/// 3 runtime or numerical error.
#[derive(Debug, Parser)]
#[command(name = "lookahes", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment for each seed.
    Run {
        config: PathBuf,
        /// Seed to run; repeat for several (default: run.seeds).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Output directory (default: run.output_dir, then ./results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the inner optimizers.
        #[arg(long, env = "LOOKAHES_THREADS")]
        threads: Option<usize>,
        /// Record wall-clock time per step in records.csv.
        #[arg(long)]
        timing: bool,
        /// Print per-step progress to stderr.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Run the Cartesian product of configuration overrides.
    Sweep {
        config: PathBuf,
        /// Axis `key=v1,v2,...` with a dotted key such as acquisition.kind;
        /// repeat for more axes.
        #[arg(long)]
        grid: Vec<GridAxis>,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "LOOKAHES_THREADS")]
        threads: Option<usize>,
        /// Sweep cells to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check the implementation against exact references.
    Validate {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            threads,
            timing,
            verbose,
        } => cmd_run(&RunArgs {
            config,
            seeds,
            out,
            threads,
            timing,
            verbose,
        })
        .map(|_| ()),
        Command::Sweep {
            config,
            grid,
            seeds,
            out,
            threads,
            jobs,
        } => cmd_sweep(&SweepArgs {
            config,
            grid,
            seeds,
            out,
            threads,
            jobs,
        })
        .map(|_| ()),
        Command::Validate { suite } => cmd_validate(suite, &mut std::io::stdout()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lookahes: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
