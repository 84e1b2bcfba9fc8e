//! Gaussian-process surrogate.

pub mod gp;
pub mod kernel;

pub use gp::{fit_gp, FitConfig, GpModel, JITTER_LADDER};
pub use kernel::{KernelKind, KernelSpec};
