//! Exact GP regression with a constant mean.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{KernelKind, KernelSpec};
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::policy::adam::Adam;

/// Diagonal jitter tried in order when factorizing `K + σ_n²I`.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

/// Settings for marginal-likelihood fitting. Hyperparameters are clamped to
/// the given log-space bounds after each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: f64,
    pub init_lengthscale: f64,
    pub init_signal_variance: f64,
    pub init_noise_variance: f64,
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.05,
            init_lengthscale: 0.3,
            init_signal_variance: 1.0,
            init_noise_variance: 1e-2,
            lengthscale_bounds: (1e-3, 1e2),
            signal_variance_bounds: (1e-6, 1e3),
            noise_variance_bounds: (1e-8, 1e1),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("surrogate.{name} must be positive, got {v}")))
            }
        };
        pos("lr", self.lr)?;
        pos("init_lengthscale", self.init_lengthscale)?;
        pos("init_signal_variance", self.init_signal_variance)?;
        pos("init_noise_variance", self.init_noise_variance)?;
        for (name, (lo, hi)) in [
            ("lengthscale_bounds", self.lengthscale_bounds),
            ("signal_variance_bounds", self.signal_variance_bounds),
            ("noise_variance_bounds", self.noise_variance_bounds),
        ] {
            pos(name, lo)?;
            if !(lo <= hi) {
                return Err(Error::Config(format!("surrogate.{name} is empty: ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    fn log_bounds(&self) -> [(f64, f64); 3] {
        let ln = |(a, b): (f64, f64)| (a.ln(), b.ln());
        [
            ln(self.lengthscale_bounds),
            ln(self.signal_variance_bounds),
            ln(self.noise_variance_bounds),
        ]
    }
}

/// A GP conditioned on a training set at fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    mean_const: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    /// Explicit lower factor (upper triangle zeroed).
    l: DMatrix<f64>,
    alpha: DVector<f64>,
}

fn gram(kernel: &KernelSpec, xs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| kernel.eval(&xs[i], &xs[j]))
}

/// Factor `K + (σ_n² + jitter)I`, walking up the jitter ladder.
fn factor(kernel: &KernelSpec, k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    for &jitter in &JITTER_LADDER {
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += kernel.noise_variance + jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok((c, jitter));
            }
        }
    }
    let min_diag = (0..n).map(|i| k[(i, i)]).fold(f64::INFINITY, f64::min);
    Err(Error::NotPositiveDefinite {
        size: n,
        jitter: *JITTER_LADDER.last().unwrap(),
        min_diag: min_diag + kernel.noise_variance,
    })
}

pub(crate) fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

pub(crate) fn back_substitute_transpose(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= l[(j, i)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

impl GpModel {
    /// Condition on `(xs, ys)` with the given hyperparameters and constant
    /// mean.
    pub fn condition(
        kernel: KernelSpec,
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
        mean_const: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(Error::Precondition("GP needs at least one observation".into()));
        }
        let k = gram(&kernel, &xs);
        let (chol, jitter) = factor(&kernel, &k)?;
        let centered = DVector::from_iterator(ys.len(), ys.iter().map(|y| y - mean_const));
        let alpha = chol.solve(&centered);
        let l = chol.l();
        Ok(Self {
            kernel,
            train_x: xs,
            train_y: ys,
            mean_const,
            jitter,
            chol,
            l,
            alpha,
        })
    }

    pub fn from_dataset(kernel: KernelSpec, data: &Dataset) -> Result<Self> {
        let mean = sample_mean(data.observations());
        Self::condition(kernel, data.points().to_vec(), data.observations().to_vec(), mean)
    }

    /// Same hyperparameters and mean, conditioned on a different training set.
    pub fn recondition(&self, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        Self::condition(self.kernel, xs, ys, self.mean_const)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn mean_const(&self) -> f64 {
        self.mean_const
    }

    /// Jitter added on top of `σ_n²` to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `σ_n² + jitter`, the diagonal actually added to `K`.
    pub fn effective_noise(&self) -> f64 {
        self.kernel.noise_variance + self.jitter
    }

    pub fn n(&self) -> usize {
        self.train_x.len()
    }

    pub fn dim(&self) -> usize {
        self.train_x[0].len()
    }

    pub fn chol(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn lower_factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// `k(x, X)`.
    pub fn cross_kernel(&self, x: &[f64]) -> Vec<f64> {
        self.train_x.iter().map(|z| self.kernel.eval(x, z)).collect()
    }

    /// `(K + σ_n²I)⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut v = b.to_vec();
        forward_substitute(&self.l, &mut v);
        back_substitute_transpose(&self.l, &mut v);
        v
    }

    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let mut v = self.cross_kernel(x);
        let mean = self.mean_const + v.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum::<f64>();
        forward_substitute(&self.l, &mut v);
        let var = self.kernel.signal_variance - v.iter().map(|a| a * a).sum::<f64>();
        (mean, var.max(0.0))
    }

    pub fn posterior_mean(&self, x: &[f64]) -> f64 {
        self.mean_const
            + self
                .train_x
                .iter()
                .zip(self.alpha.iter())
                .map(|(z, a)| a * self.kernel.eval(x, z))
                .sum::<f64>()
    }

    /// Posterior mean and its input gradient.
    pub fn posterior_mean_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; x.len()];
        let mut mean = self.mean_const;
        for (z, &a) in self.train_x.iter().zip(self.alpha.iter()) {
            mean += a * self.kernel.eval_grad_x_into(x, z, a, &mut g);
        }
        (mean, g)
    }

    /// `(mean, variance, ∇mean, ∇variance)`. Where the variance is clamped
    /// at zero its gradient is zero.
    pub fn posterior_grad(&self, x: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let kx = self.cross_kernel(x);
        let mut w = kx.clone();
        forward_substitute(&self.l, &mut w);
        let var = self.kernel.signal_variance - w.iter().map(|a| a * a).sum::<f64>();
        back_substitute_transpose(&self.l, &mut w);
        let d = x.len();
        let mut gm = vec![0.0; d];
        let mut gv = vec![0.0; d];
        let mut mean = self.mean_const;
        for (j, z) in self.train_x.iter().enumerate() {
            mean += self.alpha[j] * kx[j];
            self.kernel.eval_grad_x_into(x, z, self.alpha[j], &mut gm);
            self.kernel.eval_grad_x_into(x, z, -2.0 * w[j], &mut gv);
        }
        if var <= 0.0 {
            gv.iter_mut().for_each(|g| *g = 0.0);
        }
        (mean, var.max(0.0), gm, gv)
    }

    /// Joint posterior covariance over `xs`.
    pub fn posterior_cov(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let vs: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let mut v = self.cross_kernel(x);
                forward_substitute(&self.l, &mut v);
                v
            })
            .collect();
        DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
            self.kernel.eval(&xs[i], &xs[j])
                - vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum::<f64>()
        })
    }

    /// `L⁻¹ k(x, X)`; the posterior covariance of `x` and `z` is
    /// `k(x, z) − whiten(x)ᵀ whiten(z)`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.cross_kernel(x);
        forward_substitute(&self.l, &mut v);
        v
    }

    /// Log marginal likelihood of the training targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.n() as f64;
        let centered = self.train_y.iter().map(|y| y - self.mean_const);
        let quad: f64 = centered.zip(self.alpha.iter()).map(|(c, a)| c * a).sum();
        let logdet: f64 = self.l.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * quad - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Log marginal likelihood and its gradient with respect to
    /// `[log ℓ, log σ_f², log σ_n²]`, using
    /// `∂L/∂θ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)`.
    pub fn mll_with_grad(&self) -> (f64, [f64; 3]) {
        let n = self.n();
        let kinv = self.chol.inverse();
        let mut g = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                let w = self.alpha[i] * self.alpha[j] - kinv[(i, j)];
                let (xi, xj) = (&self.train_x[i], &self.train_x[j]);
                g[0] += w * self.kernel.dlog_lengthscale(xi, xj);
                g[1] += w * self.kernel.eval(xi, xj);
            }
            g[2] += self.alpha[i] * self.alpha[i] - kinv[(i, i)];
        }
        g[0] *= 0.5;
        g[1] *= 0.5;
        g[2] *= 0.5 * self.kernel.noise_variance;
        (self.log_marginal_likelihood(), g)
    }
}

pub fn sample_mean(ys: &[f64]) -> f64 {
    if ys.is_empty() {
        0.0
    } else {
        ys.iter().sum::<f64>() / ys.len() as f64
    }
}

/// Fit kernel hyperparameters by Adam ascent on the log marginal likelihood
/// (constant mean fixed to the sample mean) and return the model at the best
/// likelihood seen. Fully deterministic given the data.
pub fn fit_gp(data: &Dataset, kind: KernelKind, cfg: &FitConfig) -> Result<GpModel> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::Precondition(format!(
            "fitting needs at least 2 observations, got {}",
            data.len()
        )));
    }
    let xs = data.points().to_vec();
    let ys = data.observations().to_vec();
    let mean = sample_mean(&ys);
    let bounds = cfg.log_bounds();
    let clamp = |p: &mut [f64; 3]| {
        for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let mut p = KernelSpec::new(
        kind,
        cfg.init_lengthscale,
        cfg.init_signal_variance,
        cfg.init_noise_variance,
    )?
    .log_params();
    clamp(&mut p);
    let mut adam = Adam::new(3, cfg.lr);
    let mut best: Option<(f64, GpModel)> = None;
    for step in 0..=cfg.steps {
        let spec = KernelSpec::from_log_params(kind, p);
        let model = GpModel::condition(spec, xs.clone(), ys.clone(), mean)?;
        let (mll, g) = if step < cfg.steps {
            model.mll_with_grad()
        } else {
            (model.log_marginal_likelihood(), [0.0; 3])
        };
        if !mll.is_finite() {
            return Err(Error::Numerical(format!(
                "marginal likelihood is {mll} at {spec:?}"
            )));
        }
        if best.as_ref().is_none_or(|(b, _)| mll > *b) {
            best = Some((mll, model));
        }
        if step == cfg.steps {
            break;
        }
        let ascent = [-g[0], -g[1], -g[2]];
        adam.step(&mut p, &ascent);
        clamp(&mut p);
    }
    Ok(best.expect("at least one evaluation").1)
}
