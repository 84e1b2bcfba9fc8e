//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Criteria 5, 6 and 10 run full experiments and take
//! most of the time.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use lookahes_cli::validate::{run_suite, Check, Suite};
use lookahes_cli::{cmd_run, config, RunArgs};
use lookahes_core::acquisition::baselines::{expected_improvement, expected_improvement_mc, normal_base_samples};
use lookahes_core::acquisition::{AcqConfig, AcqKind, BaselineContext};
use lookahes_core::costs::CostKind;
use lookahes_core::pathwise::{fantasy_tree, prior_draw_count};
use lookahes_core::rng::SeedStream;
use lookahes_core::runner::{run_experiment, ExperimentConfig, RunResult};
use lookahes_core::sobol::sobol_points;
use lookahes_core::surrogate::{GpModel, KernelKind, KernelSpec};
use rand::Rng;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn load(rel: &str) -> ExperimentConfig {
    config::load(&repo_path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn checks_detail(checks: &[Check]) -> String {
    checks.iter().map(|c| format!("{} {:.3e} < {:.0e}", c.name, c.measured, c.threshold)).collect::<Vec<_>>().join("; ")
}

/// Runs each seed of `cfg`, returning the runs and the slowest seed in
/// seconds.
fn run_seeds(cfg: &ExperimentConfig) -> (Vec<RunResult>, f64) {
    let mut runs = Vec::new();
    let mut slowest: f64 = 0.0;
    for &seed in &cfg.run.seeds {
        let started = Instant::now();
        let run = run_experiment(cfg, seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        slowest = slowest.max(started.elapsed().as_secs_f64());
        runs.push(run);
    }
    (runs, slowest)
}

fn final_values(runs: &[RunResult]) -> Vec<f64> {
    runs.iter().map(|r| r.final_value).collect()
}

fn pathwise_fidelity() -> Outcome {
    let started = Instant::now();
    let checks = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
        .install(|| run_suite(Suite::Matheron));
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "pathwise fidelity",
        pass: checks.iter().all(|c| c.pass) && secs < 30.0,
        detail: format!("{}; {secs:.1} s single-threaded < 30 s", checks_detail(&checks)),
    }
}

fn gradient_correctness() -> Outcome {
    let checks = run_suite(Suite::Gradients);
    Outcome {
        id: 2,
        name: "gradient correctness",
        pass: checks.iter().all(|c| c.pass),
        detail: checks_detail(&checks),
    }
}

fn random_posterior(stream: &SeedStream) -> GpModel {
    let mut rng = stream.rng();
    let n = rng.random_range(3..10);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
    let kernel = KernelSpec::new(
        KernelKind::Matern52,
        rng.random_range(0.1..0.6),
        rng.random_range(0.5..2.0),
        rng.random_range(1e-4..1e-1),
    )
    .expect("valid kernel");
    GpModel::condition(kernel, xs, ys, 0.0).expect("well conditioned")
}

fn baseline_oracles() -> Outcome {
    let eps = normal_base_samples(8192, &SeedStream::new(21)).expect("samples");
    let cfg = AcqConfig {
        kind: AcqKind::Kg,
        ..AcqConfig::default()
    };
    let mut ei_gap: f64 = 0.0;
    let mut kg_min = f64::INFINITY;
    for i in 0..20 {
        let stream = SeedStream::new(100 + i);
        let gp = random_posterior(&stream);
        let best = gp.train_y().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xs = sobol_points(2, 8, &stream.fork_named("points")).expect("points");
        for x in &xs {
            let (mu, var) = gp.posterior(x);
            let sigma = var.sqrt();
            ei_gap = ei_gap.max((expected_improvement_mc(mu, sigma, best, &eps) - expected_improvement(mu, sigma, best)).abs());
        }
        let kg = BaselineContext::new(AcqKind::Kg, &gp, best, &cfg, &stream.fork_named("kg")).expect("kg context");
        for x in xs.iter().take(4) {
            kg_min = kg_min.min(kg.value(x));
        }
    }
    Outcome {
        id: 3,
        name: "baseline oracle equivalence",
        pass: ei_gap < 0.01 && kg_min >= -1e-3,
        detail: format!("max |MC EI - analytic EI| {ei_gap:.2e} < 1e-2 over 20 posteriors; min KG {kg_min:.2e} >= -1e-3"),
    }
}

fn trajectory_count() -> Outcome {
    let restarts = 4;
    let mut counts = Vec::new();
    for horizon in [1usize, 5, 20] {
        let mut cfg = ExperimentConfig::default();
        cfg.env.name = "ackley2".into();
        cfg.env.calibration.grid_side = 64;
        cfg.acquisition.kind = AcqKind::Lookahes;
        cfg.acquisition.horizon = horizon;
        cfg.acquisition.restarts = restarts;
        cfg.acquisition.grad_steps = 5;
        cfg.acquisition.n_features = 128;
        cfg.policy.warmup_steps = 2;
        cfg.run.n_init = 5;
        // The first step plans the full horizon; later steps plan less.
        cfg.run.n_steps = horizon + 1;
        let before = prior_draw_count();
        run_experiment(&cfg, 0).expect("short run");
        let per_step = (prior_draw_count() - before) as f64 / cfg.run.n_steps as f64;
        counts.push((horizon, per_step));
    }
    let flat = counts.iter().all(|&(_, c)| c == restarts as f64);

    let gp = random_posterior(&SeedStream::new(5));
    let mut tree = Vec::new();
    for depth in 1..=6usize {
        let queries: Vec<Vec<f64>> = (0..depth).map(|i| vec![0.1 + 0.13 * i as f64, 0.5]).collect();
        let c = fantasy_tree(&gp, &queries, 2, &SeedStream::new(6)).expect("tree");
        tree.push((depth, c.trajectories));
    }
    let exponential = tree.iter().all(|&(d, t)| t == 1u64 << d);
    Outcome {
        id: 4,
        name: "trajectory-count invariant",
        pass: flat && exponential,
        detail: format!(
            "prior draws per step (L, count) {counts:?} == r = {restarts}; fantasy tree (L, leaves) {tree:?} == 2^L"
        ),
    }
}

fn ackley_reproduction(spotlight_runs: &mut Vec<RunResult>) -> Outcome {
    let look_cfg = load("configs/ackley2_spotlight_lookahes.toml");
    let ei_cfg = load("configs/ackley2_spotlight_ei.toml");
    let (look, look_secs) = run_seeds(&look_cfg);
    let (ei, ei_secs) = run_seeds(&ei_cfg);
    let scaled = |runs: &[RunResult]| median(runs.iter().map(|r| r.final_value / 3.0).collect());
    let (m_look, m_ei) = (scaled(&look), scaled(&ei));
    let slowest = look_secs.max(ei_secs);
    spotlight_runs.extend(look);
    spotlight_runs.extend(ei);
    Outcome {
        id: 5,
        name: "desk-scale Ackley reproduction",
        pass: m_look >= 0.9 && m_ei <= 0.3 && slowest <= 3600.0,
        detail: format!(
            "median scaled final value LookaHES {m_look:.3} >= 0.9, EI {m_ei:.3} <= 0.3; slowest seed {:.1} min <= 60",
            slowest / 60.0
        ),
    }
}

fn horizon_trend(spotlight_runs: &mut Vec<RunResult>) -> Outcome {
    let mut medians = Vec::new();
    for horizon in [5usize, 20] {
        let mut cfg = load("configs/syngp_spotlight_lookahes.toml");
        cfg.acquisition.horizon = horizon;
        let (runs, _) = run_seeds(&cfg);
        medians.push(median(final_values(&runs)));
        spotlight_runs.extend(runs);
    }
    Outcome {
        id: 6,
        name: "horizon ablation trend",
        pass: medians[1] >= medians[0],
        detail: format!("SynGP spotlight median final value L=20 {:.3} >= L=5 {:.3}", medians[1], medians[0]),
    }
}

fn cost_vectors() -> Outcome {
    let checks = run_suite(Suite::Costs);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    Outcome {
        id: 7,
        name: "cost-model unit vectors",
        pass: failed.is_empty(),
        detail: format!("{} exact cases, failures: {failed:?}", checks.len()),
    }
}

fn spotlight_feasibility(runs: &[RunResult]) -> Outcome {
    let mut pairs = 0usize;
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for run in runs {
        let cost = run.config.cost.model().expect("valid cost");
        assert_eq!(cost.kind, CostKind::Spotlight);
        let mut prev = run.start_point.clone();
        for rec in &run.records {
            let d = cost.distance(&prev, &rec.query);
            worst = worst.max(d - cost.r);
            pairs += 1;
            if d > cost.r + 1e-9 {
                violations += 1;
            }
            prev = rec.query.clone();
        }
    }
    Outcome {
        id: 8,
        name: "spotlight feasibility",
        pass: violations == 0 && pairs > 0,
        detail: format!("{violations} violations over {pairs} committed pairs in {} runs; max excess {worst:.2e}", runs.len()),
    }
}

fn determinism(spotlight_runs: &mut Vec<RunResult>) -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let cfg_path = tmp.path().join("det.toml");
    std::fs::write(
        &cfg_path,
        r#"
[env]
name = "ackley2"
noise_sigma = 0.05

[cost]
kind = "spotlight"
r = 0.1

[acquisition]
kind = "lookahes"
horizon = 5
restarts = 8
grad_steps = 20
n_features = 256

[run]
n_init = 10
n_steps = 4
"#,
    )
    .expect("write config");
    let mut run_with = |threads: usize, name: &str| {
        let out = tmp.path().join(name);
        let runs = cmd_run(&RunArgs {
            config: cfg_path.clone(),
            seeds: vec![3],
            out: Some(out.clone()),
            threads: Some(threads),
            ..RunArgs::default()
        })
        .expect("run succeeds");
        spotlight_runs.extend(runs);
        std::fs::read(out.join("records.csv")).expect("records.csv")
    };
    let a = run_with(1, "a");
    let b = run_with(1, "b");
    let c = run_with(8, "c");
    Outcome {
        id: 9,
        name: "determinism",
        pass: a == b && a == c,
        detail: format!("records.csv identical twice at 1 thread: {}; 8 threads equals 1 thread: {}", a == b, a == c),
    }
}

fn discrete_domain(spotlight_runs: &mut Vec<RunResult>) -> Outcome {
    let (look, _) = run_seeds(&load("configs/syngp_discrete_lookahes.toml"));
    let (ei, _) = run_seeds(&load("configs/syngp_discrete_ei.toml"));
    let (m_look, m_ei) = (median(final_values(&look)), median(final_values(&ei)));
    spotlight_runs.extend(look);
    spotlight_runs.extend(ei);
    Outcome {
        id: 10,
        name: "discrete domain",
        pass: m_look > m_ei,
        detail: format!("discrete SynGP (C=20) median final value LookaHES {m_look:.3} > EI {m_ei:.3}"),
    }
}

fn main() -> ExitCode {
    let mut spotlight_runs = Vec::new();
    let mut outcomes = vec![pathwise_fidelity(), gradient_correctness(), baseline_oracles(), trajectory_count()];
    outcomes.push(ackley_reproduction(&mut spotlight_runs));
    outcomes.push(horizon_trend(&mut spotlight_runs));
    outcomes.push(cost_vectors());
    let det = determinism(&mut spotlight_runs);
    let disc = discrete_domain(&mut spotlight_runs);
    outcomes.push(spotlight_feasibility(&spotlight_runs));
    outcomes.push(det);
    outcomes.push(disc);
    outcomes.sort_by_key(|o| o.id);

    let mut failed = 0;
    for o in &outcomes {
        println!("{} criterion {:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
