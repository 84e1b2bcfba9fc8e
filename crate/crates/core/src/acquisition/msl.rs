//! Multistep lookahead over pathwise samples with free decision variables.
//!
//! Each path `τ` owns its own lookahead sequence and action, parameterized
//! through a sigmoid so the optimizer works on an unconstrained vector of
//! `r · (L + 1) · dim` variables. The objective is the same pathwise
//! bracket used by the policy rollout.

use rayon::prelude::*;

use super::{compare_scored, make_feasible, AcqConfig, Candidate, SearchSpace};
use crate::costs::CostModel;
use crate::error::{Error, Result};
use crate::pathwise::PathBatch;
use crate::policy::network::sigmoid;
use crate::policy::Adam;
use crate::rng::{labels, SeedStream};
use crate::sobol::sobol_points;

/// Bracket of one path: `−f^τ(a) + λ c(x_{1:t}, x_{t+1:t+L}, a)` with the
/// soft cost, where `sequence` holds the lookahead queries followed by the
/// action. Also returns the gradient with respect to every point.
fn bracket_grad(batch: &PathBatch, tau: usize, cost_history: &[Vec<f64>], cost: &CostModel, sequence: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let points: Vec<&[f64]> = sequence.iter().map(Vec::as_slice).collect();
    let (c, mut grads) = cost.soft_trajectory_cost(cost_history, &points);
    grads.iter_mut().flatten().for_each(|g| *g *= cost.lambda);
    let action = sequence.last().expect("sequence holds the action");
    let mut fg = vec![0.0; action.len()];
    let f = batch.value_grad(tau, action, &mut fg);
    let last = grads.last_mut().expect("sequence holds the action");
    for (g, d) in last.iter_mut().zip(&fg) {
        *g -= d;
    }
    (-f + cost.lambda * c, grads)
}

fn check_sequences(batch: &PathBatch, cost_history: &[Vec<f64>], sequences: &[Vec<Vec<f64>>]) -> Result<()> {
    if cost_history.is_empty() {
        return Err(Error::Precondition("pathwise objective needs the current position".into()));
    }
    if sequences.len() != batch.n_paths() {
        return Err(Error::DimensionMismatch {
            expected: batch.n_paths(),
            got: sequences.len(),
        });
    }
    for seq in sequences {
        if seq.is_empty() {
            return Err(Error::Precondition("each path needs at least an action".into()));
        }
        if let Some(p) = seq.iter().find(|p| p.len() != batch.dim()) {
            return Err(Error::DimensionMismatch {
                expected: batch.dim(),
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Pathwise objective `(1/r) Σ_τ [−f^τ(a^τ) + λ c^τ]` for explicit per-path
/// sequences (lookahead queries then action). Returns the mean and the
/// per-path brackets.
pub fn pathwise_objective(
    batch: &PathBatch,
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    sequences: &[Vec<Vec<f64>>],
) -> Result<(f64, Vec<f64>)> {
    check_sequences(batch, cost_history, sequences)?;
    let brackets: Vec<f64> = sequences
        .iter()
        .enumerate()
        .map(|(tau, seq)| bracket_grad(batch, tau, cost_history, cost, seq).0)
        .collect();
    let mean = brackets.iter().sum::<f64>() / brackets.len() as f64;
    Ok((mean, brackets))
}

/// Optimized free variables: per-path sequences of `L + 1` points.
#[derive(Debug, Clone, PartialEq)]
pub struct MslPlan {
    pub sequences: Vec<Vec<Vec<f64>>>,
    pub brackets: Vec<f64>,
    pub objective: f64,
}

impl MslPlan {
    pub fn variable_count(&self) -> usize {
        self.sequences.iter().flatten().map(Vec::len).sum()
    }
}

fn logit(x: f64) -> f64 {
    let x = x.clamp(1e-6, 1.0 - 1e-6);
    (x / (1.0 - x)).ln()
}

/// Adam on the sigmoid-parameterized sequences of every path.
///
/// Actions start at scrambled Sobol points and lookahead queries on the
/// segment from the current position to the action. Paths do not interact,
/// so each keeps the best sequence it visited.
pub fn plan_msl(batch: &PathBatch, cost_history: &[Vec<f64>], cost: &CostModel, acq: &AcqConfig, stream: &SeedStream) -> Result<MslPlan> {
    let current = cost_history
        .last()
        .ok_or_else(|| Error::Precondition("optimizer needs the current position".into()))?;
    let (r, dim, horizon) = (batch.n_paths(), batch.dim(), acq.horizon);
    let actions = sobol_points(dim, r, &stream.fork_named(labels::RESTART))?;
    let per_path = (horizon + 1) * dim;

    let plans: Vec<(f64, Vec<Vec<f64>>)> = actions
        .into_par_iter()
        .enumerate()
        .map(|(tau, action)| {
            let mut u: Vec<f64> = (1..=horizon + 1)
                .flat_map(|j| {
                    let s = j as f64 / (horizon + 1) as f64;
                    current.iter().zip(&action).map(move |(c, a)| logit(c + s * (a - c))).collect::<Vec<_>>()
                })
                .collect();
            let mut adam = Adam::new(per_path, acq.msl_lr);
            let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
            for step in 0..=acq.grad_steps {
                let seq: Vec<Vec<f64>> = u.chunks(dim).map(|c| c.iter().map(|&v| sigmoid(v)).collect()).collect();
                let (value, grads) = bracket_grad(batch, tau, cost_history, cost, &seq);
                if value.is_finite() && best.as_ref().is_none_or(|(b, _)| value < *b) {
                    best = Some((value, seq.clone()));
                }
                if step == acq.grad_steps {
                    break;
                }
                let gu: Vec<f64> = grads
                    .iter()
                    .flatten()
                    .zip(seq.iter().flatten())
                    .map(|(g, x)| g * x * (1.0 - x))
                    .collect();
                adam.step(&mut u, &gu);
            }
            best.unwrap_or_else(|| {
                let seq = u.chunks(dim).map(|c| c.iter().map(|&v| sigmoid(v)).collect()).collect();
                (f64::INFINITY, seq)
            })
        })
        .collect();

    let brackets: Vec<f64> = plans.iter().map(|p| p.0).collect();
    let objective = brackets.iter().sum::<f64>() / r as f64;
    Ok(MslPlan {
        sequences: plans.into_iter().map(|p| p.1).collect(),
        brackets,
        objective,
    })
}

/// Plan with [`plan_msl`] and commit the first query of the path with the
/// lowest bracket after restoring feasibility.
pub fn optimize_msl(
    batch: &PathBatch,
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    acq: &AcqConfig,
    space: &SearchSpace,
    stream: &SeedStream,
) -> Result<Candidate> {
    let current = cost_history
        .last()
        .ok_or_else(|| Error::Precondition("optimizer needs the current position".into()))?;
    let plan = plan_msl(batch, cost_history, cost, acq, stream)?;
    let mut scored = Vec::with_capacity(plan.sequences.len());
    for (tau, seq) in plan.sequences.iter().enumerate() {
        let (x, projected) = make_feasible(space, cost, current, &seq[0]);
        let mut fixed = seq.clone();
        fixed[0] = x.clone();
        let (bracket, _) = bracket_grad(batch, tau, cost_history, cost, &fixed);
        let c = cost.step_cost(cost_history, &x)?;
        scored.push((bracket, c, x, projected));
    }
    let best = scored
        .into_iter()
        .filter(|s| s.0.is_finite())
        .min_by(|a, b| compare_scored((a.0, a.1, &a.2), (b.0, b.1, &b.2), current, false))
        .ok_or_else(|| Error::Numerical("no finite multistep candidate".into()))?;
    Ok(Candidate {
        query: best.2,
        acq_value: plan.objective,
        actions: plan.sequences.iter().map(|s| s.last().expect("action").clone()).collect(),
        predicted_cost: best.1,
        projected: best.3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathwise::sample_paths;
    use crate::surrogate::{GpModel, KernelKind, KernelSpec};

    fn batch(r: usize, dim: usize) -> PathBatch {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![0.1 + 0.2 * i as f64; dim]).collect();
        let ys = vec![0.1, 0.8, -0.3, 0.5, 0.0];
        let k = KernelSpec::new(KernelKind::Matern52, 0.25, 1.0, 1e-3).unwrap();
        let gp = GpModel::condition(k, xs, ys, 0.0).unwrap();
        sample_paths(&gp, r, 256, &SeedStream::new(9)).unwrap()
    }

    #[test]
    fn variable_count() {
        let b = batch(8, 2);
        let acq = AcqConfig { horizon: 20, grad_steps: 2, ..Default::default() };
        let plan = plan_msl(&b, &[vec![0.5, 0.5]], &CostModel::euclidean(1.0), &acq, &SeedStream::new(1)).unwrap();
        assert_eq!(plan.variable_count(), 8 * 21 * 2);
    }

    #[test]
    fn bracket_gradient_matches_differences() {
        let b = batch(3, 2);
        let cost = CostModel::euclidean(0.7).with_lambda(1.3);
        let hist = vec![vec![0.2, 0.3]];
        let seq = vec![vec![0.4, 0.35], vec![0.55, 0.6], vec![0.7, 0.45]];
        let (_, g) = bracket_grad(&b, 1, &hist, &cost, &seq);
        let h = 1e-6;
        for j in 0..seq.len() {
            for i in 0..2 {
                let mut p = seq.clone();
                let mut m = seq.clone();
                p[j][i] += h;
                m[j][i] -= h;
                let fd = (bracket_grad(&b, 1, &hist, &cost, &p).0 - bracket_grad(&b, 1, &hist, &cost, &m).0) / (2.0 * h);
                assert!((fd - g[j][i]).abs() < 1e-5, "{j},{i}: {fd} vs {}", g[j][i]);
            }
        }
    }

    #[test]
    fn optimization_improves_and_is_deterministic() {
        let b = batch(4, 1);
        let cost = CostModel::euclidean(1.0);
        let hist = vec![vec![0.5]];
        let acq = AcqConfig { horizon: 2, grad_steps: 50, ..Default::default() };
        let a = optimize_msl(&b, &hist, &cost, &acq, &SearchSpace::Continuous { dim: 1 }, &SeedStream::new(3)).unwrap();
        let c = optimize_msl(&b, &hist, &cost, &acq, &SearchSpace::Continuous { dim: 1 }, &SeedStream::new(3)).unwrap();
        assert_eq!(a, c);
        let untrained = AcqConfig { grad_steps: 0, ..acq };
        let p0 = plan_msl(&b, &hist, &cost, &untrained, &SeedStream::new(3)).unwrap();
        assert!(a.acq_value <= p0.objective);
    }

    #[test]
    fn spotlight_commit_is_feasible() {
        let b = batch(4, 2);
        let cost = CostModel::spotlight(0.1);
        let hist = vec![vec![0.1, 0.9]];
        let acq = AcqConfig { horizon: 3, grad_steps: 20, ..Default::default() };
        let c = optimize_msl(&b, &hist, &cost, &acq, &SearchSpace::Continuous { dim: 2 }, &SeedStream::new(4)).unwrap();
        assert!(cost.distance(&hist[0], &c.query) <= 0.1 + 1e-9);
    }
}
