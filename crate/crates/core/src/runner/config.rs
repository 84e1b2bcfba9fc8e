//! Experiment configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcqConfig;
use crate::costs::{CostKind, CostModel};
use crate::environments::{EnvConfig, SyntheticFn};
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;
use crate::surrogate::{FitConfig, KernelKind};

/// Cost model as written in a configuration file. The norm follows from
/// the kind, and `k` is ignored for the spotlight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub kind: CostKind,
    pub k: f64,
    pub r: f64,
    pub d: f64,
    pub m: f64,
    pub cost_noise_sigma: f64,
    /// Weight of the cost against the objective.
    pub lambda: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            kind: CostKind::Euclidean,
            k: 1.0,
            r: 0.0,
            d: 0.0,
            m: 0.0,
            cost_noise_sigma: 0.0,
            lambda: 1.0,
        }
    }
}

impl CostConfig {
    pub fn model(&self) -> Result<CostModel> {
        let base = match self.kind {
            CostKind::Euclidean => CostModel::euclidean(self.k),
            CostKind::Manhattan => CostModel::manhattan(self.k),
            CostKind::Spotlight => CostModel::spotlight(self.r),
            CostKind::NonmarkovEuclidean => CostModel::nonmarkov_euclidean(self.k, self.d, self.m),
        };
        let model = base.with_lambda(self.lambda).with_noise(self.cost_noise_sigma);
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub kernel: KernelKind,
    pub fit: FitConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Matern52,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Sobol initial points evaluated before the first step.
    pub n_init: usize,
    /// Number of optimization steps `T`.
    pub n_steps: usize,
    /// Normalized start position; defaults to the worst initial point.
    pub start_point: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    /// Record wall-clock time per step (otherwise `wall_ms` is 0 so runs
    /// stay byte-reproducible).
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            n_steps: 20,
            start_point: None,
            seeds: vec![0],
            output_dir: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub cost: CostConfig,
    pub acquisition: AcqConfig,
    pub surrogate: SurrogateConfig,
    pub policy: PolicyConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Input dimension implied by the environment name.
    pub fn dim(&self) -> Result<usize> {
        match self.env.name.as_str() {
            "syngp" | "image" => Ok(2),
            name => Ok(SyntheticFn::parse(name)?.dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.cost.model()?;
        self.acquisition.validate()?;
        self.surrogate.fit.validate()?;
        self.policy.validate()?;
        if self.run.n_init < 2 {
            return Err(Error::Config(format!("run.n_init must be at least 2, got {}", self.run.n_init)));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must list at least one seed".into()));
        }
        if let Some(s) = &self.run.start_point {
            let dim = self.dim()?;
            if s.len() != dim {
                return Err(Error::Config(format!("run.start_point has {} coordinates, environment has {dim}", s.len())));
            }
            if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config("run.start_point must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}
