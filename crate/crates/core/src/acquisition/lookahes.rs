//! The LookaHES objective and its optimizer.

use super::{compare_scored, make_feasible, AcqConfig, Candidate, SearchSpace};
use crate::costs::{CostKind, CostModel};
use crate::error::{Error, Result};
use crate::pathwise::PathBatch;
use crate::policy::{
    backward, backward_full, rollout, vmf_perturb, ActionHead, Adam, Head, PolicyConfig, PolicyParams, RolloutOptions,
};
use crate::rng::{labels, SeedStream};

/// Network parameters with their optimizer state, carried across steps.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub params: PolicyParams,
    pub adam: Adam,
    pub action_logits: Option<Vec<f64>>,
    action_adam: Option<Adam>,
}

impl PolicyState {
    pub fn new(space: &SearchSpace, cfg: &PolicyConfig, stream: &SeedStream) -> Result<Self> {
        let (dim, head) = match space {
            SearchSpace::Continuous { dim } => (*dim, Head::Continuous),
            SearchSpace::Discrete(d) => (d.dims, Head::Discrete { categories: d.categories }),
        };
        let params = PolicyParams::init(dim, cfg.hidden, head, &stream.fork_named(labels::POLICY_INIT))?;
        let adam = Adam::new(params.len(), cfg.lr);
        Ok(Self {
            params,
            adam,
            action_logits: None,
            action_adam: None,
        })
    }

    /// Fresh free action variables for `n_paths` paths (all logits zero).
    fn reset_actions(&mut self, cfg: &PolicyConfig, n_paths: usize) {
        if cfg.action_head == ActionHead::Free {
            let len = n_paths * self.params.layout().output;
            self.action_logits = Some(vec![0.0; len]);
            self.action_adam = Some(Adam::new(len, cfg.lr.max(1e-2)));
        } else {
            self.action_logits = None;
            self.action_adam = None;
        }
    }

    /// Gradient steps on the rollout objective, keeping the best parameters
    /// seen. Returns the best objective.
    pub fn train(
        &mut self,
        batch: &PathBatch,
        history: (&[Vec<f64>], &[f64]),
        cost_history: &[Vec<f64>],
        cost: &CostModel,
        horizon: usize,
        steps: usize,
    ) -> Result<f64> {
        let mut best: Option<(f64, Vec<f64>, Option<Vec<f64>>)> = None;
        for step in 0..=steps {
            let opts = RolloutOptions {
                horizon,
                action_logits: self.action_logits.clone(),
                ..Default::default()
            };
            let res = rollout(&self.params, batch, history, cost_history, cost, &opts)?;
            if best.as_ref().is_none_or(|(b, _, _)| res.objective < *b) {
                best = Some((res.objective, self.params.values.clone(), self.action_logits.clone()));
            }
            if step == steps {
                break;
            }
            let (g, ga) = backward_full(&res, &self.params);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite policy gradient".into()));
            }
            self.adam.step(&mut self.params.values, &g);
            if let (Some(logits), Some(adam), Some(ga)) = (&mut self.action_logits, &mut self.action_adam, ga) {
                adam.step(logits, &ga);
            }
        }
        let (obj, values, logits) = best.expect("at least one rollout");
        self.params.values = values;
        self.action_logits = logits;
        Ok(obj)
    }
}

impl PolicyState {
    /// Warm-up from several targets. For each target a copy of the network
    /// is trained for `steps` iterations to walk from the current position
    /// toward it (imitation term plus the rollout objective), then scored by
    /// the plain objective. The best copy, or `self` if no copy beats it,
    /// becomes the state. Returns the winning objective.
    #[allow(clippy::too_many_arguments)]
    pub fn warm_start(
        &mut self,
        batch: &PathBatch,
        history: (&[Vec<f64>], &[f64]),
        cost_history: &[Vec<f64>],
        cost: &CostModel,
        horizon: usize,
        steps: usize,
        targets: &[Vec<f64>],
    ) -> Result<f64> {
        let current = cost_history
            .last()
            .ok_or_else(|| Error::Precondition("warm-up needs the current position".into()))?;
        let plain = RolloutOptions {
            horizon,
            action_logits: self.action_logits.clone(),
            ..Default::default()
        };
        let mut best_obj = rollout(&self.params, batch, history, cost_history, cost, &plain)?.objective;
        let mut best: Option<PolicyState> = None;
        for target in targets {
            let mut st = self.clone();
            st.adam = Adam::new(st.params.len(), st.adam.lr.max(WARMUP_LR));
            let guide = guide_path(current, target, horizon + 1, step_limit(cost, current, target, horizon));
            let opts = RolloutOptions {
                guide: Some((guide, WARMUP_GUIDE_WEIGHT)),
                ..plain.clone()
            };
            for _ in 0..steps {
                let res = rollout(&st.params, batch, history, cost_history, cost, &opts)?;
                let g = backward(&res, &st.params);
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical("non-finite warm-up gradient".into()));
                }
                st.adam.step(&mut st.params.values, &g);
            }
            let obj = rollout(&st.params, batch, history, cost_history, cost, &plain)?.objective;
            if obj < best_obj {
                best_obj = obj;
                best = Some(st);
            }
        }
        if let Some(mut st) = best {
            st.adam = Adam::new(st.params.len(), self.adam.lr);
            *self = st;
        }
        Ok(best_obj)
    }
}

const WARMUP_LR: f64 = 1e-2;
const WARMUP_GUIDE_WEIGHT: f64 = 10.0;

/// Longest step the warm-up walk takes: inside the free radius for a
/// spotlight cost, otherwise an even split of the distance.
fn step_limit(cost: &CostModel, from: &[f64], to: &[f64], horizon: usize) -> f64 {
    match cost.kind {
        CostKind::Spotlight => 0.9 * cost.r,
        _ => from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / (horizon + 1) as f64,
    }
}

/// `n` points walking from `from` toward `to` in steps of at most
/// `max_step`, stopping at `to`.
fn guide_path(from: &[f64], to: &[f64], n: usize, max_step: f64) -> Vec<Vec<f64>> {
    let dist = from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (1..=n)
        .map(|k| {
            let u = if dist > 0.0 { (k as f64 * max_step / dist).min(1.0) } else { 1.0 };
            from.iter().zip(to).map(|(a, b)| a + u * (b - a)).collect()
        })
        .collect()
}

/// Rollout objective `(1/r) Σ_τ [−f^τ(a^τ) + λ c^τ]` of the current policy
/// (lower is better).
pub fn lookahes_value(
    params: &PolicyParams,
    batch: &PathBatch,
    history: (&[Vec<f64>], &[f64]),
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    horizon: usize,
) -> Result<f64> {
    let opts = RolloutOptions {
        horizon,
        ..Default::default()
    };
    Ok(rollout(params, batch, history, cost_history, cost, &opts)?.objective)
}

/// Train the policy on the frozen path batch, then propose the next query.
///
/// The trained policy's first query is perturbed once per path with vMF
/// noise around the direction of travel; each perturbed query is scored by
/// the rollout objective with that query forced as the first step, and the
/// best one is returned. Under a spotlight cost each perturbation is redrawn
/// up to 32 times until feasible; if no candidate is feasible the policy's
/// query is projected onto the feasible ball.
#[allow(clippy::too_many_arguments)]
pub fn optimize_lookahes(
    state: &mut PolicyState,
    batch: &PathBatch,
    history: (&[Vec<f64>], &[f64]),
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    acq: &AcqConfig,
    pcfg: &PolicyConfig,
    space: &SearchSpace,
    stream: &SeedStream,
) -> Result<Candidate> {
    let current = cost_history
        .last()
        .ok_or_else(|| Error::Precondition("optimizer needs the current position".into()))?;
    state.reset_actions(pcfg, batch.n_paths());
    state.train(batch, history, cost_history, cost, acq.horizon, acq.grad_steps)?;

    let base_opts = RolloutOptions {
        horizon: acq.horizon,
        action_logits: state.action_logits.clone(),
        ..Default::default()
    };
    let base = rollout(&state.params, batch, history, cost_history, cost, &base_opts)?;
    let proposal = base.first_query().to_vec();
    let direction: Vec<f64> = proposal.iter().zip(current).map(|(a, b)| a - b).collect();

    let mut rng = stream.fork_named(labels::VMF).rng();
    let mut candidates = Vec::with_capacity(batch.n_paths());
    for _ in 0..batch.n_paths() {
        for _ in 0..32 {
            let x = space.admit(&vmf_perturb(&proposal, Some(&direction), pcfg.vmf_kappa, pcfg.vmf_magnitude, &mut rng));
            if cost.feasible(current, &x) {
                candidates.push((x, false));
                break;
            }
        }
    }
    if candidates.is_empty() {
        candidates.push(make_feasible(space, cost, current, &proposal));
    }

    let mut scored = Vec::with_capacity(candidates.len());
    for (x, projected) in candidates {
        let opts = RolloutOptions {
            forced_first: Some(x.clone()),
            ..base_opts.clone()
        };
        let res = rollout(&state.params, batch, history, cost_history, cost, &opts)?;
        let c = cost.step_cost(cost_history, &x)?;
        scored.push((res.objective, c, x, projected, res.actions));
    }
    let best = scored
        .into_iter()
        .min_by(|a, b| compare_scored((a.0, a.1, &a.2), (b.0, b.1, &b.2), current, false))
        .expect("at least one candidate");
    Ok(Candidate {
        query: best.2,
        acq_value: best.0,
        actions: best.4,
        predicted_cost: best.1,
        projected: best.3,
    })
}
