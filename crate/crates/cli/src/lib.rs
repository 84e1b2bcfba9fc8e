//! Command implementations behind the `lookahes` binary.

pub mod config;
pub mod output;
pub mod validate;

use std::path::{Path, PathBuf};

use lookahes_core::runner::{compute_metrics, run_experiment, run_experiment_observed, Aggregate, ExperimentConfig, RunResult};
use rayon::prelude::*;

pub use config::GridAxis;
pub use validate::Suite;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::ChecksFailed(_) => 1,
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

/// Run `f` on a dedicated pool of `threads` workers (or the default pool).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Overrides `run.seeds` when nonempty.
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub timing: bool,
    /// Print one progress line per step to stderr.
    pub verbose: bool,
}

fn output_root(out: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    out.clone()
        .or_else(|| cfg.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn run_one(cfg: &ExperimentConfig, seed: u64, dir: &Path, verbose: bool) -> Result<RunResult, CliError> {
    let outcome = if verbose {
        let started = std::time::Instant::now();
        run_experiment_observed(cfg, seed, |r| {
            eprintln!(
                "seed {seed} step {}/{}: y {:.4} regret {:.4} cost {:.4} ({:.1} s)",
                r.step,
                cfg.run.n_steps,
                r.observation,
                r.regret,
                r.cumulative_cost,
                started.elapsed().as_secs_f64()
            );
        })
    } else {
        run_experiment(cfg, seed)
    };
    match outcome {
        Ok(run) => Ok(run),
        Err(failure) => {
            // Keep whatever finished before the failure.
            if !failure.partial.is_empty() {
                let partial = RunResult {
                    seed,
                    config: cfg.clone(),
                    initial_points: Vec::new(),
                    initial_observations: Vec::new(),
                    start_point: failure.partial[0].query.iter().map(|_| f64::NAN).collect(),
                    records: failure.partial.clone(),
                    final_action: Vec::new(),
                    final_value: f64::NAN,
                    final_regret: f64::NAN,
                    best_observed: f64::NAN,
                    best_observed_value: f64::NAN,
                };
                if std::fs::create_dir_all(dir).is_ok() {
                    if let Ok(bytes) = output::records_csv(&partial) {
                        let _ = std::fs::write(dir.join("records.csv"), bytes);
                    }
                }
            }
            Err(CliError::Runtime(format!("seed {seed}: {failure}")))
        }
    }
}

/// `lookahes run`: one output directory per seed (the output directory
/// itself when there is a single seed).
pub fn cmd_run(args: &RunArgs) -> Result<Vec<RunResult>, CliError> {
    let mut cfg = config::load(&args.config)?;
    if args.timing {
        cfg.run.timing = true;
    }
    if !args.seeds.is_empty() {
        cfg.run.seeds = args.seeds.clone();
    }
    let root = output_root(&args.out, &cfg);
    let seeds = cfg.run.seeds.clone();
    let single = seeds.len() == 1;
    with_threads(args.threads, || {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let dir = if single { root.clone() } else { root.join(format!("seed-{seed}")) };
            let run = run_one(&cfg, seed, &dir, args.verbose)?;
            let metrics = compute_metrics(&run, &[]).map_err(|e| CliError::Runtime(e.to_string()))?;
            output::write_run(&dir, &run, &metrics)?;
            runs.push(run);
        }
        if !single {
            let metrics = compute_metrics(&runs[0], &runs[1..]).map_err(|e| CliError::Runtime(e.to_string()))?;
            let path = root.join("metrics.json");
            let bytes = serde_json::to_vec_pretty(&metrics).map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(runs)
    })?
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub config: PathBuf,
    pub grid: Vec<GridAxis>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub jobs: usize,
}

/// One row of `sweep_summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: String,
    pub overrides: Vec<(String, String)>,
    pub seed: u64,
    pub final_value: f64,
    pub final_value_scaled: f64,
    pub final_regret: f64,
    pub cumulative_regret: f64,
    pub cumulative_cost: f64,
    pub best_observed_value: f64,
}

fn cell_name(overrides: &[(String, String)], seed: u64) -> String {
    let mut parts: Vec<String> = overrides
        .iter()
        .map(|(k, v)| format!("{k}={v}").replace(['/', '\\', ' '], "-"))
        .collect();
    if parts.is_empty() {
        parts.push("base".into());
    }
    parts.push(format!("seed-{seed}"));
    parts.join("_")
}

/// `lookahes sweep`: the Cartesian product of the grid axes, times the
/// seeds, one subdirectory per run plus `sweep_summary.csv`.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let base: toml::Value = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let base_cfg = config::from_value(base.clone())?;

    // Resolve every cell before running anything.
    let mut jobs: Vec<(Vec<(String, String)>, ExperimentConfig, u64)> = Vec::new();
    for cell in config::grid_cells(&args.grid) {
        let mut doc = base.clone();
        for (k, v) in &cell {
            config::set_path(&mut doc, k, config::parse_literal(v))?;
        }
        let cfg = config::from_value(doc).map_err(|e| {
            let keys: Vec<&str> = cell.iter().map(|(k, _)| k.as_str()).collect();
            CliError::Config(format!("sweep override {}: {e}", keys.join(", ")))
        })?;
        let seeds = if args.seeds.is_empty() { cfg.run.seeds.clone() } else { args.seeds.clone() };
        for seed in seeds {
            jobs.push((cell.clone(), cfg.clone(), seed));
        }
    }
    let root = output_root(&args.out, &base_cfg);
    let run_job = |(cell, cfg, seed): &(Vec<(String, String)>, ExperimentConfig, u64)| -> Result<SweepRow, CliError> {
        let name = cell_name(cell, *seed);
        let dir = root.join(&name);
        let run = run_one(cfg, *seed, &dir, false)?;
        let metrics = compute_metrics(&run, &[]).map_err(|e| CliError::Runtime(e.to_string()))?;
        output::write_run(&dir, &run, &metrics)?;
        let m = &metrics.runs[0];
        Ok(SweepRow {
            cell: name,
            overrides: cell.clone(),
            seed: *seed,
            final_value: m.final_value,
            final_value_scaled: m.final_value_scaled,
            final_regret: m.final_regret,
            cumulative_regret: m.cumulative_regret,
            cumulative_cost: m.cumulative_cost,
            best_observed_value: m.best_observed_value,
        })
    };
    let rows: Vec<SweepRow> = if args.jobs > 1 {
        with_threads(Some(args.jobs), || jobs.par_iter().map(run_job).collect::<Result<Vec<_>, _>>())??
    } else {
        with_threads(args.threads, || jobs.iter().map(run_job).collect::<Result<Vec<_>, _>>())??
    };
    write_sweep_summary(&root, &args.grid, &rows)?;
    Ok(rows)
}

fn write_sweep_summary(root: &Path, grid: &[GridAxis], rows: &[SweepRow]) -> Result<(), CliError> {
    std::fs::create_dir_all(root).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", root.display())))?;
    let path = root.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    let mut header = vec!["cell".to_string()];
    header.extend(grid.iter().map(|a| a.key.clone()));
    header.extend(
        ["seed", "final_value", "final_value_scaled", "final_regret", "cumulative_regret", "cumulative_cost", "best_observed_value"]
            .map(String::from),
    );
    let err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut row = vec![r.cell.clone()];
        row.extend(r.overrides.iter().map(|(_, v)| v.clone()));
        row.push(r.seed.to_string());
        row.extend(
            [r.final_value, r.final_value_scaled, r.final_regret, r.cumulative_regret, r.cumulative_cost, r.best_observed_value]
                .map(output::fmt_f64),
        );
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

/// `lookahes validate`: print every check and fail if any does.
pub fn cmd_validate(suite: Suite, out: &mut impl std::io::Write) -> Result<(), CliError> {
    let checks = validate::run_suite(suite);
    for c in &checks {
        writeln!(out, "{c}").map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

/// Median of per-seed final values, for quick summaries.
pub fn median_final_value(runs: &[RunResult]) -> Option<f64> {
    let values: Vec<f64> = runs.iter().map(|r| r.final_value).collect();
    Aggregate::of(&values).ok().map(|a| a.median)
}
