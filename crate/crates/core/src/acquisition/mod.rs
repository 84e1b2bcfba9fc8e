//! Acquisition objectives and their optimizers.
//!
//! Every optimizer returns a [`Candidate`] whose query is feasible under the
//! active cost model. Baselines maximize `Acq(x) − λ c(x_{1:t}, x)`; the
//! nonmyopic kinds minimize the pathwise rollout objective.

pub mod baselines;
pub mod lookahes;
pub mod msl;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::costs::{CostKind, CostModel};
use crate::domain::DiscreteDomain;
use crate::error::{Error, Result};

pub use baselines::{baseline_value, optimize_baseline, BaselineContext};
pub use lookahes::{lookahes_value, optimize_lookahes, PolicyState};
pub use msl::{optimize_msl, pathwise_objective, plan_msl, MslPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcqKind {
    Lookahes,
    Msl,
    Sr,
    Ei,
    Pi,
    Ucb,
    Kg,
}

impl AcqKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lookahes" => Some(Self::Lookahes),
            "msl" => Some(Self::Msl),
            "sr" => Some(Self::Sr),
            "ei" => Some(Self::Ei),
            "pi" => Some(Self::Pi),
            "ucb" => Some(Self::Ucb),
            "kg" => Some(Self::Kg),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Lookahes => "lookahes",
            Self::Msl => "msl",
            Self::Sr => "sr",
            Self::Ei => "ei",
            Self::Pi => "pi",
            Self::Ucb => "ucb",
            Self::Kg => "kg",
        }
    }

    /// Whether the kind plans over pathwise samples.
    pub fn is_nonmyopic(self) -> bool {
        matches!(self, Self::Lookahes | Self::Msl)
    }
}

/// Settings shared by all acquisition kinds. The cost multiplier λ lives in
/// [`CostModel::lambda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcqConfig {
    pub kind: AcqKind,
    /// Lookahead queries before the action (nonmyopic kinds only).
    pub horizon: usize,
    /// Number of paths (nonmyopic) or optimizer starts (baselines).
    pub restarts: usize,
    /// Random Fourier features per path.
    pub n_features: usize,
    /// Quasi-Monte Carlo samples for EI/PI estimates.
    pub mc_samples: usize,
    /// UCB exploration weight: `μ + √β σ`.
    pub beta: f64,
    /// PI logistic temperature.
    pub tau: f64,
    /// Gradient steps of the inner optimizer (policy or free variables).
    pub grad_steps: usize,
    /// Gradient steps per baseline start.
    pub baseline_steps: usize,
    pub baseline_lr: f64,
    /// Learning rate for the free variables of MSL.
    pub msl_lr: f64,
    pub kg_fantasies: usize,
    pub kg_grid: usize,
    pub kg_refine_steps: usize,
}

impl Default for AcqConfig {
    fn default() -> Self {
        Self {
            kind: AcqKind::Lookahes,
            horizon: 20,
            restarts: 64,
            n_features: crate::pathwise::DEFAULT_FEATURES,
            mc_samples: 8192,
            beta: 2.0,
            tau: 0.1,
            grad_steps: 200,
            baseline_steps: 100,
            baseline_lr: 0.02,
            msl_lr: 0.05,
            kg_fantasies: 16,
            kg_grid: 256,
            kg_refine_steps: 10,
        }
    }
}

impl AcqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("acquisition.restarts must be positive".into()));
        }
        if self.n_features == 0 || self.mc_samples == 0 {
            return Err(Error::Config("acquisition.n_features and mc_samples must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config(format!("acquisition.beta must be nonnegative, got {}", self.beta)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("acquisition.tau must be positive, got {}", self.tau)));
        }
        if !(self.baseline_lr > 0.0 && self.msl_lr > 0.0) {
            return Err(Error::Config("acquisition learning rates must be positive".into()));
        }
        if self.kg_fantasies < 2 || self.kg_fantasies % 2 != 0 {
            return Err(Error::Config("acquisition.kg_fantasies must be even and at least 2".into()));
        }
        if self.kg_grid == 0 {
            return Err(Error::Config("acquisition.kg_grid must be positive".into()));
        }
        Ok(())
    }

    /// Effective lookahead: myopic kinds never look ahead.
    pub fn effective_horizon(&self) -> usize {
        if self.kind.is_nonmyopic() {
            self.horizon
        } else {
            0
        }
    }
}

/// The point an optimizer proposes to query next.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub query: Vec<f64>,
    /// Objective value at the query (lower is better for the nonmyopic
    /// kinds, higher is better for baselines).
    pub acq_value: f64,
    /// Proposed final action (per-path heads for the nonmyopic kinds).
    pub actions: Vec<Vec<f64>>,
    pub predicted_cost: f64,
    /// Set when feasibility had to be restored by projection.
    pub projected: bool,
}

/// Where queries may be placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchSpace {
    Continuous { dim: usize },
    Discrete(DiscreteDomain),
}

impl SearchSpace {
    pub fn dim(&self) -> usize {
        match self {
            Self::Continuous { dim } => *dim,
            Self::Discrete(d) => d.dims,
        }
    }

    /// Map a point of `[0,1]^dim` to an admissible query.
    pub fn admit(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Continuous { .. } => x.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            Self::Discrete(d) => d.snap(x),
        }
    }
}

/// Radially shrink `x` toward `center` until it lies within the spotlight
/// radius (exact Euclidean projection for `p = 2`).
pub fn project_to_ball(cost: &CostModel, center: &[f64], x: &[f64]) -> Vec<f64> {
    let dist = cost.distance(center, x);
    if dist <= cost.r || dist == 0.0 {
        return x.to_vec();
    }
    let s = cost.r / dist;
    let mut y: Vec<f64> = center.iter().zip(x).map(|(c, v)| c + s * (v - c)).collect();
    // Guard against rounding pushing the point just outside the ball.
    let mut shrink = s;
    while cost.distance(center, &y) > cost.r {
        shrink *= 1.0 - 1e-12;
        y = center.iter().zip(x).map(|(c, v)| c + shrink * (v - c)).collect();
    }
    y
}

/// Make `x` an admissible, feasible query given the current position.
/// Returns the point and whether projection was needed.
pub fn make_feasible(space: &SearchSpace, cost: &CostModel, current: &[f64], x: &[f64]) -> (Vec<f64>, bool) {
    let x = space.admit(x);
    if cost.kind != CostKind::Spotlight || cost.feasible(current, &x) {
        return (x, false);
    }
    let projected = space.admit(&project_to_ball(cost, current, &x));
    if cost.feasible(current, &projected) {
        return (projected, true);
    }
    if let SearchSpace::Discrete(d) = space {
        // Nearest feasible cell center, falling back to staying put.
        let mut best: Option<(f64, Vec<f64>)> = None;
        for_each_cell(d, |c| {
            if cost.feasible(current, c) {
                let dist = cost.distance(&x, c);
                if best.as_ref().is_none_or(|(b, _)| dist < *b) {
                    best = Some((dist, c.to_vec()));
                }
            }
        });
        if let Some((_, c)) = best {
            return (c, true);
        }
    }
    (current.to_vec(), true)
}

/// Visit every cell center of a discrete domain in lexicographic order.
pub fn for_each_cell(d: &DiscreteDomain, mut f: impl FnMut(&[f64])) {
    let mut levels = vec![0usize; d.dims];
    loop {
        let x: Vec<f64> = levels.iter().map(|&c| d.cell_center(c)).collect();
        f(&x);
        let mut i = d.dims;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            levels[i] += 1;
            if levels[i] < d.categories {
                break;
            }
            levels[i] = 0;
        }
    }
}

/// Deterministic ordering of scored points: by score (`better` decides the
/// direction), then lower cost, then nearer to `anchor`, then
/// lexicographically smaller coordinates.
pub fn compare_scored(
    a: (f64, f64, &[f64]),
    b: (f64, f64, &[f64]),
    anchor: &[f64],
    higher_is_better: bool,
) -> Ordering {
    let by_score = if higher_is_better { b.0.total_cmp(&a.0) } else { a.0.total_cmp(&b.0) };
    let dist = |x: &[f64]| x.iter().zip(anchor).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    by_score
        .then(a.1.total_cmp(&b.1))
        .then(dist(a.2).total_cmp(&dist(b.2)))
        .then_with(|| {
            a.2.iter()
                .zip(b.2)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}
