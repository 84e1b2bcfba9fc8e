//! Recurrent query policy: network, reverse pass, optimizer, exploration
//! noise.

pub mod adam;
pub mod network;
pub mod rollout;
pub mod vmf;

pub use adam::Adam;
pub use network::{Head, Layout, PolicyParams, DEFAULT_HIDDEN};
pub use rollout::{backward, backward_full, policy_step, rollout, RolloutOptions, RolloutResult};
pub use vmf::{sample_vmf, vmf_perturb};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-path action of a rollout is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionHead {
    /// One more decoder step after the last lookahead query.
    Policy,
    /// Free per-path action variables optimized jointly with the network.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub lr: f64,
    pub vmf_kappa: f64,
    pub vmf_magnitude: f64,
    /// Warm-up a freshly created network by imitating walks from the
    /// current position toward `warmup_targets` points (the best
    /// observation plus Sobol points), `warmup_steps` iterations each.
    pub warmup: bool,
    pub warmup_steps: usize,
    pub warmup_targets: usize,
    /// Re-initialize the network at every step instead of carrying it over.
    pub reset_each_step: bool,
    pub action_head: ActionHead,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            lr: 1e-3,
            vmf_kappa: 0.0,
            vmf_magnitude: 0.05,
            warmup: true,
            warmup_steps: 50,
            warmup_targets: 8,
            reset_each_step: false,
            action_head: ActionHead::Policy,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("policy.hidden must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("policy.lr must be positive, got {}", self.lr)));
        }
        if !(self.vmf_kappa >= 0.0) || !(self.vmf_magnitude >= 0.0) {
            return Err(Error::Config("policy.vmf_kappa and vmf_magnitude must be nonnegative".into()));
        }
        Ok(())
    }
}
