//! Cost-aware nonmyopic Bayesian optimization.
//!
//! The crate fits a Gaussian-process surrogate, draws pathwise posterior
//! samples, and trains a recurrent policy whose rollouts over those samples
//! give a multi-step, cost-penalized acquisition objective. Myopic baselines,
//! benchmark environments and the outer optimization loop live alongside.

pub mod acquisition;
pub mod costs;
pub mod domain;
pub mod environments;
pub mod error;
pub mod pathwise;
pub mod policy;
pub mod rng;
pub mod runner;
pub mod sobol;
pub mod surrogate;

pub use costs::{CostKind, CostModel};
pub use domain::{BoxDomain, Dataset, DiscreteDomain};
pub use error::{Error, Result};
pub use rng::SeedStream;
