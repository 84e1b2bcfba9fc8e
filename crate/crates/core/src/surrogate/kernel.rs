//! Isotropic stationary kernels.
//!
//! Every kernel is written as `k(x, z) = s · g(ρ)` with `ρ = ‖x − z‖ / ℓ`.
//! Besides `g` we need `h(ρ) = g'(ρ) / ρ`, which is finite at the origin for
//! the smooth kernels and gives the input gradient
//! `∇ₓk = s · h(ρ) · (x − z) / ℓ²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Matern12,
    Matern32,
    Matern52,
}

impl KernelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rbf" => Some(Self::Rbf),
            "matern12" => Some(Self::Matern12),
            "matern32" => Some(Self::Matern32),
            "matern52" => Some(Self::Matern52),
            _ => None,
        }
    }

    /// Smoothness ν of a Matérn kernel; `None` for the RBF.
    pub fn nu(self) -> Option<f64> {
        match self {
            Self::Rbf => None,
            Self::Matern12 => Some(0.5),
            Self::Matern32 => Some(1.5),
            Self::Matern52 => Some(2.5),
        }
    }

    /// `g(ρ)`.
    pub fn shape(self, rho: f64) -> f64 {
        match self {
            Self::Rbf => (-0.5 * rho * rho).exp(),
            Self::Matern12 => (-rho).exp(),
            Self::Matern32 => {
                let a = 3f64.sqrt() * rho;
                (1.0 + a) * (-a).exp()
            }
            Self::Matern52 => {
                let a = 5f64.sqrt() * rho;
                (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    /// `h(ρ) = g'(ρ) / ρ`. Matérn-1/2 is not differentiable at 0, where the
    /// subgradient 0 is returned.
    pub fn shape_deriv_over_rho(self, rho: f64) -> f64 {
        match self {
            Self::Rbf => -(-0.5 * rho * rho).exp(),
            Self::Matern12 => {
                if rho == 0.0 {
                    0.0
                } else {
                    -(-rho).exp() / rho
                }
            }
            Self::Matern32 => -3.0 * (-(3f64.sqrt()) * rho).exp(),
            Self::Matern52 => {
                let a = 5f64.sqrt() * rho;
                -(5.0 / 3.0) * (1.0 + a) * (-a).exp()
            }
        }
    }
}

/// Kernel family with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let spec = Self {
            kind,
            lengthscale,
            signal_variance,
            noise_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.lengthscale) || !ok(self.signal_variance) {
            return Err(Error::Config(format!(
                "kernel lengthscale and signal variance must be positive, got {} and {}",
                self.lengthscale, self.signal_variance
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// `[log ℓ, log σ_f², log σ_n²]`.
    pub fn log_params(&self) -> [f64; 3] {
        [
            self.lengthscale.ln(),
            self.signal_variance.ln(),
            self.noise_variance.ln(),
        ]
    }

    pub fn from_log_params(kind: KernelKind, p: [f64; 3]) -> Self {
        Self {
            kind,
            lengthscale: p[0].exp(),
            signal_variance: p[1].exp(),
            noise_variance: p[2].exp(),
        }
    }

    pub fn rho(&self, x: &[f64], z: &[f64]) -> f64 {
        sq_dist(x, z).sqrt() / self.lengthscale
    }

    /// `k(x, z)` without the noise term.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        self.signal_variance * self.kind.shape(self.rho(x, z))
    }

    pub fn try_eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: z.len(),
            });
        }
        Ok(self.eval(x, z))
    }

    /// Adds `scale · ∇ₓk(x, z)` into `out` and returns `k(x, z)`.
    pub fn eval_grad_x_into(&self, x: &[f64], z: &[f64], scale: f64, out: &mut [f64]) -> f64 {
        let rho = self.rho(x, z);
        let k = self.signal_variance * self.kind.shape(rho);
        let c = scale * self.signal_variance * self.kind.shape_deriv_over_rho(rho)
            / (self.lengthscale * self.lengthscale);
        if c != 0.0 {
            for ((o, a), b) in out.iter_mut().zip(x).zip(z) {
                *o += c * (a - b);
            }
        }
        k
    }

    /// `∂k/∂log ℓ = −s ρ g'(ρ) = −s ρ² h(ρ)`.
    pub fn dlog_lengthscale(&self, x: &[f64], z: &[f64]) -> f64 {
        let rho = self.rho(x, z);
        -self.signal_variance * rho * rho * self.kind.shape_deriv_over_rho(rho)
    }
}

pub fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [KernelKind; 4] = [
        KernelKind::Rbf,
        KernelKind::Matern12,
        KernelKind::Matern32,
        KernelKind::Matern52,
    ];

    fn spec(kind: KernelKind, l: f64, s: f64) -> KernelSpec {
        KernelSpec::new(kind, l, s, 0.0).unwrap()
    }

    #[test]
    fn zero_distance_gives_signal_variance() {
        for kind in KINDS {
            let k = spec(kind, 0.7, 2.3);
            assert_eq!(k.eval(&[0.1, 0.4], &[0.1, 0.4]), 2.3);
        }
    }

    #[test]
    fn rbf_half_at_log_two() {
        let k = spec(KernelKind::Rbf, 1.0, 1.0);
        let r = (2.0 * 2f64.ln()).sqrt();
        assert!((k.eval(&[0.0], &[r]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matern32_unit_distance() {
        let k = spec(KernelKind::Matern32, 1.0, 1.0);
        let s3 = 3f64.sqrt();
        let expected = (1.0 + s3) * (-s3).exp();
        assert!((k.eval(&[0.0], &[1.0]) - expected).abs() < 1e-15);
        assert!((expected - 0.48336).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        assert!(spec(KernelKind::Rbf, 1.0, 1.0).try_eval(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn input_gradient_matches_differences() {
        let x = [0.31, 0.72, 0.15];
        let z = [0.52, 0.44, 0.09];
        for kind in KINDS {
            let k = spec(kind, 0.4, 1.7);
            let mut g = [0.0; 3];
            k.eval_grad_x_into(&x, &z, 1.0, &mut g);
            for i in 0..3 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (k.eval(&xp, &z) - k.eval(&xm, &z)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "{kind:?} {i}");
            }
        }
    }

    #[test]
    fn lengthscale_derivative_matches_differences() {
        let x = [0.2, 0.9];
        let z = [0.6, 0.3];
        for kind in KINDS {
            let k = spec(kind, 0.5, 1.3);
            let h = 1e-6;
            let mut kp = k;
            let mut km = k;
            kp.lengthscale = (0.5f64.ln() + h).exp();
            km.lengthscale = (0.5f64.ln() - h).exp();
            let fd = (kp.eval(&x, &z) - km.eval(&x, &z)) / (2.0 * h);
            assert!((fd - k.dlog_lengthscale(&x, &z)).abs() < 1e-8, "{kind:?}");
        }
    }

    #[test]
    fn matern12_subgradient_at_coincident_points() {
        let k = spec(KernelKind::Matern12, 0.3, 1.0);
        let mut g = [0.0; 2];
        k.eval_grad_x_into(&[0.5, 0.5], &[0.5, 0.5], 1.0, &mut g);
        assert_eq!(g, [0.0, 0.0]);
    }
}
