//! The outer optimization loop and its bookkeeping.

mod config;
mod metrics;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{
    compare_scored, make_feasible, optimize_baseline, optimize_lookahes, optimize_msl, AcqConfig, AcqKind, Candidate,
    PolicyState, SearchSpace,
};
use crate::costs::CostModel;
use crate::domain::Dataset;
use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::pathwise::sample_paths;
use crate::rng::{labels, SeedStream};
use crate::sobol::sobol_points;
use crate::surrogate::{fit_gp, GpModel};

pub use config::{CostConfig, ExperimentConfig, RunConfig, SurrogateConfig};
pub use metrics::{compute_metrics, Aggregate, MetricsSummary, RunMetrics};

/// One optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub step: usize,
    pub query: Vec<f64>,
    pub observation: f64,
    pub step_cost: f64,
    pub cumulative_cost: f64,
    pub acq_value: f64,
    /// Action the decision maker would take after this step.
    pub action: Vec<f64>,
    /// `3 − f*(action)` with the noiseless objective.
    pub regret: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub initial_points: Vec<Vec<f64>>,
    pub initial_observations: Vec<f64>,
    pub start_point: Vec<f64>,
    pub records: Vec<RunRecord>,
    pub final_action: Vec<f64>,
    /// Noiseless calibrated value of the final action.
    pub final_value: f64,
    pub final_regret: f64,
    /// Largest noisy observation, initial points included.
    pub best_observed: f64,
    /// Noiseless value of the query with the largest observation.
    pub best_observed_value: f64,
}

/// A run that stopped early, with the steps completed so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Vec<RunRecord>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed steps)", self.error, self.partial.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: Vec::new(),
        }
    }
}

/// Run one seed of an experiment, building the environment from the
/// configuration.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> std::result::Result<RunResult, RunFailure> {
    run_experiment_observed(cfg, seed, |_| {})
}

/// As [`run_experiment`], calling `on_step` after every committed step.
pub fn run_experiment_observed(
    cfg: &ExperimentConfig,
    seed: u64,
    on_step: impl FnMut(&RunRecord),
) -> std::result::Result<RunResult, RunFailure> {
    cfg.validate()?;
    let root = SeedStream::new(seed);
    let env = cfg.env.build(&root.fork_named(labels::ENV))?;
    run_with_env_observed(cfg, &env, seed, on_step)
}

/// Run one seed against an already constructed environment.
pub fn run_with_env(cfg: &ExperimentConfig, env: &Environment, seed: u64) -> std::result::Result<RunResult, RunFailure> {
    run_with_env_observed(cfg, env, seed, |_| {})
}

pub fn run_with_env_observed(
    cfg: &ExperimentConfig,
    env: &Environment,
    seed: u64,
    mut on_step: impl FnMut(&RunRecord),
) -> std::result::Result<RunResult, RunFailure> {
    let root = SeedStream::new(seed);
    let cost = cfg.cost.model()?;
    let space = match env.discrete {
        Some(d) => SearchSpace::Discrete(d),
        None => SearchSpace::Continuous { dim: env.dim() },
    };
    let acq = &cfg.acquisition;
    let mut noise = root.fork_named(labels::ENV_NOISE).rng();
    let mut cost_noise = root.fork_named(labels::COST_NOISE).rng();

    // Initial design, with the start position moved to the end so it is the
    // most recent point the policy sees.
    let mut init: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cfg.run.n_init + 1);
    for x in sobol_points(env.dim(), cfg.run.n_init, &root.fork_named(labels::INIT))? {
        let x = space.admit(&x);
        let y = env.eval(&x, Some(&mut noise))?;
        init.push((x, y));
    }
    match &cfg.run.start_point {
        Some(s) => {
            let x = space.admit(s);
            let y = env.eval(&x, Some(&mut noise))?;
            init.push((x, y));
        }
        None => {
            let worst = init
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .map(|(i, _)| i)
                .expect("n_init >= 2");
            let p = init.remove(worst);
            init.push(p);
        }
    }
    let mut data = Dataset::new();
    for (x, y) in &init {
        data.push(x.clone(), *y, 0.0)?;
    }
    let start = init.last().expect("nonempty").0.clone();
    let mut cost_history = vec![start.clone()];
    let mut policy: Option<PolicyState> = None;
    let mut records: Vec<RunRecord> = Vec::with_capacity(cfg.run.n_steps);
    let mut cumulative = 0.0;
    let mut last_actions: Vec<Vec<f64>> = Vec::new();

    let fail = |error: Error, records: &[RunRecord]| RunFailure {
        error,
        partial: records.to_vec(),
    };

    for t in 1..=cfg.run.n_steps {
        let started = Instant::now();
        let step_stream = root.fork_named("step").fork(t as u64);
        let gp = fit_gp(&data, cfg.surrogate.kernel, &cfg.surrogate.fit).map_err(|e| fail(e, &records))?;
        // Queries x_t..x_T remain, then the final action.
        let step_acq = AcqConfig {
            horizon: acq.horizon.min(cfg.run.n_steps - t + 1),
            ..acq.clone()
        };
        let candidate = propose(cfg, &step_acq, &gp, &data, &cost_history, &cost, &space, &mut policy, &root, &step_stream)
            .map_err(|e| fail(e, &records))?;

        let current = cost_history.last().expect("nonempty");
        let (query, _) = make_feasible(&space, &cost, current, &candidate.query);
        let step_cost = cost
            .committed_cost(&cost_history, &query, Some(&mut cost_noise))
            .map_err(|e| fail(e, &records))?;
        if !step_cost.is_finite() {
            return Err(fail(Error::Numerical(format!("step {t} committed an infeasible query")), &records));
        }
        let y = env.eval(&query, Some(&mut noise)).map_err(|e| fail(e, &records))?;
        data.push(query.clone(), y, step_cost).map_err(|e| fail(e, &records))?;
        cost_history.push(query.clone());
        cumulative += step_cost;

        let action = select_final_action(&gp, &data, &cost_history, &cost, &candidate.actions, acq, &space, &step_stream)
            .map_err(|e| fail(e, &records))?;
        last_actions = candidate.actions;
        let wall_ms = if cfg.run.timing { started.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        records.push(RunRecord {
            step: t,
            query,
            observation: y,
            step_cost,
            cumulative_cost: cumulative,
            acq_value: candidate.acq_value,
            regret: env.regret(&action),
            action,
            wall_ms,
        });
        on_step(records.last().expect("just pushed"));
    }

    let gp = fit_gp(&data, cfg.surrogate.kernel, &cfg.surrogate.fit).map_err(|e| fail(e, &records))?;
    let final_action = select_final_action(&gp, &data, &cost_history, &cost, &last_actions, acq, &space, &root.fork_named("final"))
        .map_err(|e| fail(e, &records))?;
    let final_value = env.value(&final_action);
    let (best_i, best_observed) = data
        .observations()
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("nonempty data");
    Ok(RunResult {
        seed,
        config: cfg.clone(),
        initial_points: init.iter().map(|p| p.0.clone()).collect(),
        initial_observations: init.iter().map(|p| p.1).collect(),
        start_point: start,
        records,
        final_regret: env.optimum_value - final_value,
        final_action,
        final_value,
        best_observed,
        best_observed_value: env.value(&data.points()[best_i]),
    })
}

#[allow(clippy::too_many_arguments)]
fn propose(
    cfg: &ExperimentConfig,
    acq: &AcqConfig,
    gp: &GpModel,
    data: &Dataset,
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    space: &SearchSpace,
    policy: &mut Option<PolicyState>,
    root: &SeedStream,
    stream: &SeedStream,
) -> Result<Candidate> {
    match acq.kind {
        AcqKind::Lookahes => {
            let history = (data.points(), data.observations());
            let mut fresh = false;
            if policy.is_none() || cfg.policy.reset_each_step {
                *policy = Some(PolicyState::new(space, &cfg.policy, root)?);
                fresh = true;
            }
            let batch = sample_paths(gp, acq.restarts, acq.n_features, &stream.fork_named("paths"))?;
            let state = policy.as_mut().expect("initialized above");
            if fresh && cfg.policy.warmup {
                let targets = warmup_targets(data, space, cfg.policy.warmup_targets, &stream.fork_named(labels::WARMUP))?;
                state.warm_start(&batch, history, cost_history, cost, acq.horizon, cfg.policy.warmup_steps, &targets)?;
            }
            optimize_lookahes(state, &batch, history, cost_history, cost, acq, &cfg.policy, space, stream)
        }
        AcqKind::Msl => {
            let batch = sample_paths(gp, acq.restarts, acq.n_features, &stream.fork_named("paths"))?;
            optimize_msl(&batch, cost_history, cost, acq, space, stream)
        }
        kind => optimize_baseline(kind, gp, data, cost_history, cost, acq, space, stream),
    }
}

/// The best observed point followed by scrambled Sobol points, `n` in total.
fn warmup_targets(data: &Dataset, space: &SearchSpace, n: usize, stream: &SeedStream) -> Result<Vec<Vec<f64>>> {
    let mut targets = Vec::with_capacity(n);
    if n == 0 {
        return Ok(targets);
    }
    let best = data
        .observations()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| data.points()[i].clone())
        .ok_or_else(|| Error::Precondition("warm-up needs observations".into()))?;
    targets.push(best);
    if n > 1 {
        targets.extend(sobol_points(targets[0].len(), n - 1, stream)?.iter().map(|x| space.admit(x)));
    }
    Ok(targets)
}

/// Where the decision maker would act now.
///
/// With per-path action proposals (nonmyopic kinds) each proposal is made
/// feasible from the current position and ranked by the exact posterior
/// mean, with the current position itself as a candidate. Without proposals
/// the posterior mean is maximized from 64 starts, penalized by the cost of
/// moving there.
#[allow(clippy::too_many_arguments)]
pub fn select_final_action(
    gp: &GpModel,
    data: &Dataset,
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    proposals: &[Vec<f64>],
    acq: &AcqConfig,
    space: &SearchSpace,
    stream: &SeedStream,
) -> Result<Vec<f64>> {
    let current = cost_history
        .last()
        .ok_or_else(|| Error::Precondition("final action needs the current position".into()))?;
    if proposals.is_empty() {
        let cfg = AcqConfig {
            kind: AcqKind::Sr,
            restarts: 64,
            ..acq.clone()
        };
        return Ok(optimize_baseline(AcqKind::Sr, gp, data, cost_history, cost, &cfg, space, &stream.fork_named("final-action"))?.query);
    }
    let mut pool: Vec<Vec<f64>> = proposals.iter().map(|a| make_feasible(space, cost, current, a).0).collect();
    pool.push(current.clone());
    let scored: Vec<(f64, f64, Vec<f64>)> = pool
        .into_iter()
        .map(|a| {
            let c = cost.step_cost(cost_history, &a).unwrap_or(f64::INFINITY);
            (gp.posterior_mean(&a), c, a)
        })
        .collect();
    Ok(scored
        .into_iter()
        .min_by(|a, b| compare_scored((a.0, a.1, &a.2), (b.0, b.1, &b.2), current, true))
        .expect("pool holds the current position")
        .2)
}
