//! Cost-penalized myopic acquisition functions.
//!
//! SR is the posterior mean; EI, PI, UCB and KG follow their usual
//! definitions. PI uses a logistic relaxation with temperature `τ` averaged
//! over quasi-Monte Carlo posterior draws, which tends to `Φ(z)` as `τ → 0`.
//! KG compares the fantasized and current maxima of the posterior mean over a
//! refined quasi-random grid, using antithetic fantasy draws.

use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{compare_scored, for_each_cell, make_feasible, AcqConfig, AcqKind, Candidate, SearchSpace};
use crate::costs::CostModel;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::policy::Adam;
use crate::rng::{labels, SeedStream};
use crate::sobol::sobol_points;
use crate::surrogate::GpModel;

/// Largest discrete domain that is scored exhaustively.
const MAX_ENUMERATED_CELLS: usize = 10_000;

fn std_normal() -> Normal {
    Normal::standard()
}

/// Analytic expected improvement; `max(μ − best, 0)` when `σ = 0`.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (mu - best).max(0.0);
    }
    let n = std_normal();
    let z = (mu - best) / sigma;
    (mu - best) * n.cdf(z) + sigma * n.pdf(z)
}

/// Monte Carlo expected improvement over standard-normal draws `eps`.
pub fn expected_improvement_mc(mu: f64, sigma: f64, best: f64, eps: &[f64]) -> f64 {
    eps.iter().map(|e| (mu + sigma * e - best).max(0.0)).sum::<f64>() / eps.len() as f64
}

fn logistic(v: f64) -> f64 {
    crate::policy::network::sigmoid(v)
}

/// Logistic-relaxed probability of improvement; the indicator `μ > best`
/// when `σ = 0`.
pub fn probability_of_improvement(mu: f64, sigma: f64, best: f64, tau: f64, eps: &[f64]) -> f64 {
    if sigma <= 0.0 {
        return if mu > best { 1.0 } else { 0.0 };
    }
    eps.iter().map(|e| logistic((mu + sigma * e - best) / tau)).sum::<f64>() / eps.len() as f64
}

pub fn upper_confidence_bound(mu: f64, sigma: f64, beta: f64) -> f64 {
    mu + beta.sqrt() * sigma
}

/// Standard-normal quantiles of a scrambled 1-D Sobol sequence.
pub fn normal_base_samples(n: usize, stream: &SeedStream) -> Result<Vec<f64>> {
    let normal = std_normal();
    Ok(sobol_points(1, n, stream)?
        .into_iter()
        .map(|u| normal.inverse_cdf(u[0].clamp(1e-12, 1.0 - 1e-12)))
        .collect())
}

/// Precomputed state for evaluating one baseline on one fitted model.
pub struct BaselineContext<'a> {
    kind: AcqKind,
    gp: &'a GpModel,
    best: f64,
    beta: f64,
    tau: f64,
    eps: Vec<f64>,
    kg: Option<KgGrid>,
}

struct KgGrid {
    whitened: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    means: Vec<f64>,
    fantasies: Vec<f64>,
}

impl<'a> BaselineContext<'a> {
    pub fn new(kind: AcqKind, gp: &'a GpModel, best: f64, cfg: &AcqConfig, stream: &SeedStream) -> Result<Self> {
        if kind.is_nonmyopic() {
            return Err(Error::Config(format!("{} is not a myopic baseline", kind.name())));
        }
        let eps = match kind {
            AcqKind::Ei | AcqKind::Pi => normal_base_samples(cfg.mc_samples, &stream.fork_named(labels::BASE_SAMPLES))?,
            _ => Vec::new(),
        };
        let kg = if kind == AcqKind::Kg { Some(KgGrid::new(gp, cfg, stream)?) } else { None };
        Ok(Self {
            kind,
            gp,
            best,
            beta: cfg.beta,
            tau: cfg.tau,
            eps,
            kg,
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            AcqKind::Sr => self.gp.posterior_mean(x),
            AcqKind::Kg => self.kg.as_ref().expect("grid built").value(self.gp, x),
            _ => {
                let (mu, var) = self.gp.posterior(x);
                self.from_moments(mu, var.sqrt())
            }
        }
    }

    fn from_moments(&self, mu: f64, sigma: f64) -> f64 {
        match self.kind {
            AcqKind::Ei => expected_improvement(mu, sigma, self.best),
            AcqKind::Pi => probability_of_improvement(mu, sigma, self.best, self.tau, &self.eps),
            AcqKind::Ucb => upper_confidence_bound(mu, sigma, self.beta),
            _ => mu,
        }
    }

    /// Value and input gradient. KG uses central differences.
    pub fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.kind {
            AcqKind::Sr => self.gp.posterior_mean_grad(x),
            AcqKind::Kg => {
                let v = self.value(x);
                let h = 1e-4;
                let g = (0..x.len())
                    .map(|i| {
                        let mut xp = x.to_vec();
                        let mut xm = x.to_vec();
                        xp[i] = (x[i] + h).min(1.0);
                        xm[i] = (x[i] - h).max(0.0);
                        (self.value(&xp) - self.value(&xm)) / (xp[i] - xm[i])
                    })
                    .collect();
                (v, g)
            }
            _ => {
                let (mu, var, gm, gv) = self.gp.posterior_grad(x);
                let sigma = var.sqrt();
                let (dmu, dsigma) = self.moment_derivatives(mu, sigma);
                let g = gm
                    .iter()
                    .zip(&gv)
                    .map(|(a, b)| dmu * a + if sigma > 0.0 { dsigma * b / (2.0 * sigma) } else { 0.0 })
                    .collect();
                (self.from_moments(mu, sigma), g)
            }
        }
    }

    /// `(∂/∂μ, ∂/∂σ)` of the moment-based acquisitions.
    fn moment_derivatives(&self, mu: f64, sigma: f64) -> (f64, f64) {
        match self.kind {
            AcqKind::Ei if sigma > 0.0 => {
                let n = std_normal();
                let z = (mu - self.best) / sigma;
                (n.cdf(z), n.pdf(z))
            }
            AcqKind::Ei => (if mu > self.best { 1.0 } else { 0.0 }, 0.0),
            AcqKind::Pi if sigma > 0.0 => {
                let (mut dm, mut ds) = (0.0, 0.0);
                for e in &self.eps {
                    let s = logistic((mu + sigma * e - self.best) / self.tau);
                    let d = s * (1.0 - s) / self.tau;
                    dm += d;
                    ds += d * e;
                }
                let n = self.eps.len() as f64;
                (dm / n, ds / n)
            }
            AcqKind::Pi => (0.0, 0.0),
            AcqKind::Ucb => (1.0, self.beta.sqrt()),
            _ => (1.0, 0.0),
        }
    }
}

impl KgGrid {
    fn new(gp: &GpModel, cfg: &AcqConfig, stream: &SeedStream) -> Result<Self> {
        let starts = sobol_points(gp.dim(), cfg.kg_grid, &stream.fork_named("kg-grid"))?;
        let points: Vec<Vec<f64>> = starts
            .into_iter()
            .map(|mut x| {
                let mut adam = Adam::new(x.len(), 0.01);
                for _ in 0..cfg.kg_refine_steps {
                    let (_, g) = gp.posterior_mean_grad(&x);
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    adam.step(&mut x, &neg);
                    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                }
                x
            })
            .collect();
        let whitened = points.iter().map(|x| gp.whiten(x)).collect();
        let means = points.iter().map(|x| gp.posterior_mean(x)).collect();
        // Symmetric normal quantiles: every draw comes with its negation.
        let k = cfg.kg_fantasies;
        let normal = std_normal();
        let fantasies = (0..k).map(|j| normal.inverse_cdf((j as f64 + 0.5) / k as f64)).collect();
        Ok(Self {
            whitened,
            points,
            means,
            fantasies,
        })
    }

    fn value(&self, gp: &GpModel, x: &[f64]) -> f64 {
        let wx = gp.whiten(x);
        let (mu_x, var_x) = gp.posterior(x);
        let s = (var_x + gp.effective_noise()).sqrt();
        let kernel = gp.kernel();
        let mut slopes = Vec::with_capacity(self.points.len() + 1);
        let mut means = Vec::with_capacity(self.points.len() + 1);
        for ((z, wz), m) in self.points.iter().zip(&self.whitened).zip(&self.means) {
            let cov = kernel.eval(z, x) - wz.iter().zip(&wx).map(|(a, b)| a * b).sum::<f64>();
            slopes.push(cov / s);
            means.push(*m);
        }
        slopes.push(var_x / s);
        means.push(mu_x);
        let current = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fantasized: f64 = self
            .fantasies
            .iter()
            .map(|z| {
                means
                    .iter()
                    .zip(&slopes)
                    .map(|(m, b)| m + b * z)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / self.fantasies.len() as f64;
        fantasized - current
    }
}

/// One-off evaluation of a baseline at `x` (rebuilds the context).
pub fn baseline_value(kind: AcqKind, gp: &GpModel, x: &[f64], best_y: f64, cfg: &AcqConfig) -> Result<f64> {
    let ctx = BaselineContext::new(kind, gp, best_y, cfg, &SeedStream::new(0))?;
    Ok(ctx.value(x))
}

/// Maximize `Acq(x) − λ c(x_{1:t}, x)`.
///
/// Continuous spaces use projected Adam from `restarts` Sobol starts plus
/// the current position, with the soft spotlight wall during ascent; the
/// final points are made feasible and rescored with the hard cost. Small
/// discrete spaces are scored exhaustively.
#[allow(clippy::too_many_arguments)]
pub fn optimize_baseline(
    kind: AcqKind,
    gp: &GpModel,
    data: &Dataset,
    cost_history: &[Vec<f64>],
    cost: &CostModel,
    cfg: &AcqConfig,
    space: &SearchSpace,
    stream: &SeedStream,
) -> Result<Candidate> {
    let current = cost_history
        .last()
        .ok_or_else(|| Error::Precondition("optimizer needs the current position".into()))?
        .clone();
    let best_y = data
        .best_observation()
        .ok_or_else(|| Error::Precondition("baselines need at least one observation".into()))?;
    let ctx = BaselineContext::new(kind, gp, best_y, cfg, stream)?;

    let finals: Vec<(Vec<f64>, bool)> = match space {
        SearchSpace::Discrete(d) if d.categories.checked_pow(d.dims as u32).is_some_and(|n| n <= MAX_ENUMERATED_CELLS) => {
            let mut cells = Vec::new();
            for_each_cell(d, |x| {
                if cost.feasible(&current, x) {
                    cells.push((x.to_vec(), false));
                }
            });
            if cells.is_empty() {
                cells.push((current.clone(), false));
            }
            cells
        }
        _ => {
            let mut starts = sobol_points(space.dim(), cfg.restarts, &stream.fork_named(labels::RESTART))?;
            starts.push(current.clone());
            let ascended: Vec<Vec<f64>> = starts
                .into_par_iter()
                .map(|x0| ascend(&ctx, cost, cost_history, cfg, x0))
                .collect();
            ascended
                .into_iter()
                .map(|x| make_feasible(space, cost, &current, &x))
                .collect()
        }
    };

    let mut scored = Vec::with_capacity(finals.len());
    for (x, projected) in finals {
        let c = cost.step_cost(cost_history, &x)?;
        let score = ctx.value(&x) - cost.lambda * c;
        scored.push((score, c, x, projected));
    }
    let best = scored
        .into_iter()
        .filter(|s| s.0.is_finite())
        .min_by(|a, b| compare_scored((a.0, a.1, &a.2), (b.0, b.1, &b.2), &current, true))
        .ok_or_else(|| Error::Numerical("no finite baseline candidate".into()))?;
    Ok(Candidate {
        query: best.2,
        acq_value: best.0,
        actions: Vec::new(),
        predicted_cost: best.1,
        projected: best.3,
    })
}

/// Projected Adam ascent on the soft-penalized acquisition; returns the
/// best point visited.
fn ascend(ctx: &BaselineContext, cost: &CostModel, cost_history: &[Vec<f64>], cfg: &AcqConfig, x0: Vec<f64>) -> Vec<f64> {
    let mut x = x0;
    let mut adam = Adam::new(x.len(), cfg.baseline_lr);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for step in 0..=cfg.baseline_steps {
        let (v, g) = ctx.value_grad(&x);
        let (c, cg) = cost.soft_trajectory_cost(cost_history, &[&x]);
        let obj = v - cost.lambda * c;
        if obj.is_finite() && best.as_ref().is_none_or(|(b, _)| obj > *b) {
            best = Some((obj, x.clone()));
        }
        if step == cfg.baseline_steps {
            break;
        }
        let descent: Vec<f64> = g.iter().zip(&cg[0]).map(|(a, b)| -(a - cost.lambda * b)).collect();
        adam.step(&mut x, &descent);
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    best.map_or(x, |(_, p)| p)
}
