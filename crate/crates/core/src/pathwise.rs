//! Pathwise posterior samples.
//!
//! A prior draw is approximated with random Fourier features,
//! `f̃(x) = Σᵢ wᵢ φᵢ(x)` with `φᵢ(x) = √(2σ_f²/M) cos(ωᵢᵀx + bᵢ)`, and moved to
//! the posterior by Matheron's rule:
//! `f(x) = μ₀ + f̃(x) + k(x, X) (K + σ²I)⁻¹ (y − μ₀ − f̃(X) − ε̃)`.
//! Each path is an ordinary deterministic, differentiable function, so a
//! horizon-`L` rollout over `r` paths touches exactly `r` function samples.

use std::cell::Cell;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{labels, SeedStream};
use crate::surrogate::{GpModel, KernelSpec};

pub const DEFAULT_FEATURES: usize = 1024;

thread_local! {
    static PRIOR_DRAWS: Cell<u64> = const { Cell::new(0) };
}

/// Number of prior function samples drawn on this thread so far.
pub fn prior_draw_count() -> u64 {
    PRIOR_DRAWS.with(Cell::get)
}

/// Random Fourier feature basis for a stationary kernel.
#[derive(Debug, Clone)]
pub struct FourierFeatures {
    dim: usize,
    freqs: Vec<f64>,
    phases: Vec<f64>,
    scale: f64,
}

impl FourierFeatures {
    /// Frequencies from the kernel's spectral density: Gaussian with std
    /// `1/ℓ` for the RBF, multivariate Student-t with `2ν` degrees of
    /// freedom scaled by `1/ℓ` for Matérn-ν.
    pub fn sample<R: Rng + ?Sized>(kernel: &KernelSpec, dim: usize, m: usize, rng: &mut R) -> Self {
        let inv_l = 1.0 / kernel.lengthscale;
        let chi = kernel.kind.nu().map(|nu| (nu, ChiSquared::new(2.0 * nu).expect("positive dof")));
        let mut freqs = Vec::with_capacity(m * dim);
        for _ in 0..m {
            let mix = match &chi {
                Some((nu, c)) => (2.0 * nu / c.sample(rng)).sqrt(),
                None => 1.0,
            };
            for _ in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                freqs.push(z * inv_l * mix);
            }
        }
        let phases = (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        Self {
            dim,
            freqs,
            phases,
            scale: (2.0 * kernel.signal_variance / m as f64).sqrt(),
        }
    }

    /// Hand-specified basis, mainly for tests.
    pub fn from_parts(dim: usize, freqs: Vec<f64>, phases: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if freqs.len() != phases.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: phases.len() * dim,
                got: freqs.len(),
            });
        }
        let m = phases.len();
        Ok(Self {
            dim,
            freqs,
            phases,
            scale: (2.0 * signal_variance / m as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn freq(&self, i: usize) -> &[f64] {
        &self.freqs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn phase(&self, i: usize) -> f64 {
        self.phases[i]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn arg(&self, i: usize, x: &[f64]) -> f64 {
        self.freq(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.phases[i]
    }

    /// `Σᵢ wᵢ φᵢ(x)`.
    pub fn weighted_value(&self, weights: &[f64], x: &[f64]) -> f64 {
        let s: f64 = (0..self.len()).map(|i| weights[i] * self.arg(i, x).cos()).sum();
        self.scale * s
    }

    /// Value of `Σᵢ wᵢ φᵢ` with its gradient added into `grad`.
    pub fn weighted_value_grad(&self, weights: &[f64], x: &[f64], grad: &mut [f64]) -> f64 {
        let mut val = 0.0;
        for i in 0..self.len() {
            let (s, c) = self.arg(i, x).sin_cos();
            val += weights[i] * c;
            let gs = -self.scale * weights[i] * s;
            for (g, w) in grad.iter_mut().zip(self.freq(i)) {
                *g += gs * w;
            }
        }
        self.scale * val
    }

    /// All features `φᵢ(x)`.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.scale * self.arg(i, x).cos()).collect()
    }
}

/// `r` posterior function samples sharing one feature basis.
#[derive(Debug, Clone)]
pub struct PathBatch {
    n_paths: usize,
    features: FourierFeatures,
    /// `r × M`, row per path.
    prior_weights: Vec<f64>,
    /// `r × n`, row per path.
    matheron: Vec<f64>,
    kernel: KernelSpec,
    train_x: Vec<Vec<f64>>,
    mean_const: f64,
}

/// Draw `n_paths` posterior samples from `gp` using `n_features` features.
pub fn sample_paths(gp: &GpModel, n_paths: usize, n_features: usize, stream: &SeedStream) -> Result<PathBatch> {
    if n_paths == 0 || n_features == 0 {
        return Err(Error::Config("path sampling needs at least one path and one feature".into()));
    }
    let dim = gp.dim();
    let features = FourierFeatures::sample(gp.kernel(), dim, n_features, &mut stream.fork_named(labels::RFF).rng());
    let mut wrng = stream.fork_named("prior-weights").rng();
    let prior_weights: Vec<f64> = (0..n_paths * n_features).map(|_| wrng.sample(StandardNormal)).collect();
    let mut erng = stream.fork_named(labels::MATHERON_NOISE).rng();
    let noise_sd = gp.effective_noise().sqrt();
    let n = gp.n();
    let mut matheron = Vec::with_capacity(n_paths * n);
    for tau in 0..n_paths {
        let w = &prior_weights[tau * n_features..(tau + 1) * n_features];
        let resid: Vec<f64> = gp
            .train_x()
            .iter()
            .zip(gp.train_y())
            .map(|(x, y)| {
                let eps: f64 = erng.sample::<f64, _>(StandardNormal) * noise_sd;
                y - gp.mean_const() - features.weighted_value(w, x) - eps
            })
            .collect();
        matheron.extend(gp.solve(&resid));
    }
    PRIOR_DRAWS.with(|c| c.set(c.get() + n_paths as u64));
    Ok(PathBatch {
        n_paths,
        features,
        prior_weights,
        matheron,
        kernel: *gp.kernel(),
        train_x: gp.train_x().to_vec(),
        mean_const: gp.mean_const(),
    })
}

impl PathBatch {
    /// Assemble a batch from explicit parts, mainly for tests.
    pub fn from_parts(
        features: FourierFeatures,
        prior_weights: Vec<f64>,
        matheron: Vec<f64>,
        kernel: KernelSpec,
        train_x: Vec<Vec<f64>>,
        mean_const: f64,
    ) -> Result<Self> {
        let m = features.len();
        if m == 0 || prior_weights.len() % m != 0 {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: prior_weights.len(),
            });
        }
        let n_paths = prior_weights.len() / m;
        if matheron.len() != n_paths * train_x.len() {
            return Err(Error::DimensionMismatch {
                expected: n_paths * train_x.len(),
                got: matheron.len(),
            });
        }
        Ok(Self {
            n_paths,
            features,
            prior_weights,
            matheron,
            kernel,
            train_x,
            mean_const,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn features(&self) -> &FourierFeatures {
        &self.features
    }

    pub fn prior_weights(&self, tau: usize) -> &[f64] {
        let m = self.n_features();
        &self.prior_weights[tau * m..(tau + 1) * m]
    }

    pub fn matheron_coef(&self, tau: usize) -> &[f64] {
        let n = self.train_x.len();
        &self.matheron[tau * n..(tau + 1) * n]
    }

    pub fn mean_const(&self) -> f64 {
        self.mean_const
    }

    fn check(&self, tau: usize, x: &[f64]) -> Result<()> {
        if tau >= self.n_paths {
            return Err(Error::IndexOutOfRange {
                index: tau,
                len: self.n_paths,
            });
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Prior term `f̃^τ(x)`.
    pub fn prior_value(&self, tau: usize, x: &[f64]) -> f64 {
        self.features.weighted_value(self.prior_weights(tau), x)
    }

    /// Matheron correction `k(x, X) V_τ`.
    pub fn correction_value(&self, tau: usize, x: &[f64]) -> f64 {
        self.train_x
            .iter()
            .zip(self.matheron_coef(tau))
            .map(|(z, v)| v * self.kernel.eval(x, z))
            .sum()
    }

    pub fn eval_path(&self, tau: usize, x: &[f64]) -> Result<f64> {
        self.check(tau, x)?;
        Ok(self.value(tau, x))
    }

    pub fn path_gradient(&self, tau: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check(tau, x)?;
        let mut g = vec![0.0; x.len()];
        self.value_grad(tau, x, &mut g);
        Ok(g)
    }

    /// Unchecked `f^τ(x)`.
    pub fn value(&self, tau: usize, x: &[f64]) -> f64 {
        self.mean_const + self.prior_value(tau, x) + self.correction_value(tau, x)
    }

    /// Unchecked `f^τ(x)` with `∇f^τ(x)` added into `grad`.
    pub fn value_grad(&self, tau: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let prior = self.features.weighted_value_grad(self.prior_weights(tau), x, grad);
        let mut corr = 0.0;
        for (z, &v) in self.train_x.iter().zip(self.matheron_coef(tau)) {
            corr += v * self.kernel.eval_grad_x_into(x, z, v, grad);
        }
        self.mean_const + prior + corr
    }

    /// Values of every path at one input, sharing the feature and kernel
    /// evaluations.
    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        let phi = self.features.features(x);
        let kx: Vec<f64> = self.train_x.iter().map(|z| self.kernel.eval(x, z)).collect();
        (0..self.n_paths)
            .map(|tau| {
                let p: f64 = self.prior_weights(tau).iter().zip(&phi).map(|(a, b)| a * b).sum();
                let c: f64 = self.matheron_coef(tau).iter().zip(&kx).map(|(a, b)| a * b).sum();
                self.mean_const + p + c
            })
            .collect()
    }
}

/// Counts from a nested-fantasy rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FantasyCounts {
    /// Leaf trajectories of the scenario tree.
    pub trajectories: u64,
    /// Posterior draws made while building the tree.
    pub sampler_calls: u64,
}

/// Reference nested-fantasy lookahead: at every node draw `branching`
/// fantasized observations at the next query of `queries`, condition the
/// GP on each and recurse. Only used to contrast the exponential tree with
/// the constant path count of [`sample_paths`].
pub fn fantasy_tree(
    gp: &GpModel,
    queries: &[Vec<f64>],
    branching: usize,
    stream: &SeedStream,
) -> Result<FantasyCounts> {
    let mut counts = FantasyCounts {
        trajectories: 0,
        sampler_calls: 0,
    };
    let mut rng = stream.rng();
    grow(gp, queries, branching, &mut rng, &mut counts)?;
    Ok(counts)
}

fn grow<R: Rng>(gp: &GpModel, queries: &[Vec<f64>], k: usize, rng: &mut R, counts: &mut FantasyCounts) -> Result<()> {
    let Some((x, rest)) = queries.split_first() else {
        counts.trajectories += 1;
        return Ok(());
    };
    let (mean, var) = gp.posterior(x);
    let sd = (var + gp.effective_noise()).sqrt();
    for _ in 0..k {
        counts.sampler_calls += 1;
        let y = mean + sd * rng.sample::<f64, _>(StandardNormal);
        let mut xs = gp.train_x().to_vec();
        let mut ys = gp.train_y().to_vec();
        xs.push(x.clone());
        ys.push(y);
        grow(&gp.recondition(xs, ys)?, rest, k, rng, counts)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::KernelKind;

    fn toy_gp(noise: f64) -> GpModel {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0, (i * 3 % 6) as f64 / 5.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (4.0 * x[0]).sin() + x[1]).collect();
        let k = KernelSpec::new(KernelKind::Matern52, 0.4, 1.0, noise).unwrap();
        GpModel::condition(k, xs, ys, 0.3).unwrap()
    }

    #[test]
    fn deterministic_per_stream() {
        let gp = toy_gp(1e-3);
        let a = sample_paths(&gp, 4, 64, &SeedStream::new(1)).unwrap();
        let b = sample_paths(&gp, 4, 64, &SeedStream::new(1)).unwrap();
        for tau in 0..4 {
            assert_eq!(a.value(tau, &[0.3, 0.8]).to_bits(), b.value(tau, &[0.3, 0.8]).to_bits());
        }
    }

    #[test]
    fn value_is_prior_plus_correction() {
        let gp = toy_gp(1e-3);
        let p = sample_paths(&gp, 3, 128, &SeedStream::new(2)).unwrap();
        let x = [0.42, 0.17];
        for tau in 0..3 {
            let direct = p.mean_const() + p.prior_value(tau, &x) + p.correction_value(tau, &x);
            assert!((p.eval_path(tau, &x).unwrap() - direct).abs() < 1e-12);
            assert!((p.eval_all(&x)[tau] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn out_of_range_path_is_error() {
        let p = sample_paths(&toy_gp(1e-3), 2, 16, &SeedStream::new(0)).unwrap();
        assert!(p.eval_path(2, &[0.0, 0.0]).is_err());
        assert!(p.path_gradient(0, &[0.0]).is_err());
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let gp = toy_gp(1e-3);
        let f = FourierFeatures::sample(gp.kernel(), 2, 8, &mut SeedStream::new(0).rng());
        let p = PathBatch::from_parts(f, vec![0.0; 8], vec![0.0; 6], *gp.kernel(), gp.train_x().to_vec(), 0.0).unwrap();
        assert_eq!(p.path_gradient(0, &[0.3, 0.3]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_feature_derivative() {
        // f(x) = w √(2s) cos(ωx + b), f'(x) = −w √(2s) ω sin(ωx + b).
        let (w, s, om, b) = (0.7, 1.5, 3.2, 0.4);
        let f = FourierFeatures::from_parts(1, vec![om], vec![b], s).unwrap();
        let k = KernelSpec::new(KernelKind::Rbf, 1.0, s, 0.0).unwrap();
        let p = PathBatch::from_parts(f, vec![w], vec![], k, vec![], 0.0).unwrap();
        let x = 0.37;
        let expected = -w * (2.0 * s).sqrt() * om * (om * x + b).sin();
        assert!((p.path_gradient(0, &[x]).unwrap()[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn fantasy_tree_grows_exponentially() {
        let gp = toy_gp(1e-2);
        let qs: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 + 0.2 * i as f64, 0.5]).collect();
        let c = fantasy_tree(&gp, &qs, 2, &SeedStream::new(0)).unwrap();
        assert_eq!(c.trajectories, 16);
        assert_eq!(c.sampler_calls, 2 + 4 + 8 + 16);
    }
}
