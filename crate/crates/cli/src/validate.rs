//! User-facing self-checks against exact or brute-force references.

use lookahes_core::costs::CostModel;
use lookahes_core::pathwise::sample_paths;
use lookahes_core::policy::{backward, rollout, Head, PolicyParams, RolloutOptions};
use lookahes_core::rng::{SeedStream, StreamRng};
use lookahes_core::surrogate::{GpModel, KernelKind, KernelSpec};
use rand::Rng;

/// One measured property and its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `measured < threshold`.
    fn below(name: &str, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            pass: measured < threshold,
        }
    }

    fn exact(name: &str, got: f64, want: f64) -> Self {
        Self {
            name: format!("{name} (got {got}, want {want})"),
            measured: if got == want { 0.0 } else { (got - want).abs() },
            threshold: 0.0,
            pass: got == want,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{status}  {}: measured {:.3e}, threshold {:.3e}", self.name, self.measured, self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Matheron,
    Gradients,
    Costs,
    All,
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Matheron => matheron(),
        Suite::Gradients => gradients(),
        Suite::Costs => costs(),
        Suite::All => [matheron(), gradients(), costs()].concat(),
    }
}

/// Eight noisy observations of a smooth 1-D function.
pub fn fixture_gp() -> GpModel {
    let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64 + 0.5) / 8.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x[0]).sin() + 0.3 * (15.0 * x[0]).cos()).collect();
    let kernel = KernelSpec::new(KernelKind::Matern52, 0.2, 1.0, 1e-2).expect("valid kernel");
    GpModel::condition(kernel, xs, ys, 0.0).expect("well conditioned")
}

fn matheron() -> Vec<Check> {
    let gp = fixture_gp();
    let grid: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64 / 15.0]).collect();
    let batch = sample_paths(&gp, 4096, 2048, &SeedStream::new(11)).expect("valid batch");
    let values: Vec<Vec<f64>> = grid.iter().map(|x| batch.eval_all(x)).collect();
    let r = batch.n_paths() as f64;
    let means: Vec<f64> = values.iter().map(|v| v.iter().sum::<f64>() / r).collect();
    let exact_cov = gp.posterior_cov(&grid);
    let mut mean_gap: f64 = 0.0;
    let mut cov_gap: f64 = 0.0;
    for i in 0..grid.len() {
        mean_gap = mean_gap.max((means[i] - gp.posterior_mean(&grid[i])).abs());
        for j in 0..grid.len() {
            let c = values[i].iter().zip(&values[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum::<f64>() / (r - 1.0);
            cov_gap = cov_gap.max((c - exact_cov[(i, j)]).abs());
        }
    }
    vec![
        Check::below("pathwise mean vs exact posterior mean (max abs)", mean_gap, 0.05),
        Check::below("pathwise covariance vs exact posterior covariance (max abs)", cov_gap, 0.1),
    ]
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6)
}

fn gradients() -> Vec<Check> {
    let gp = fixture_gp();
    let h = 1e-5;

    // Marginal likelihood with respect to the log hyperparameters.
    let (_, g) = gp.mll_with_grad();
    let base = gp.kernel().log_params();
    let mut mll_err: f64 = 0.0;
    for i in 0..3 {
        let at = |delta: f64| {
            let mut p = base;
            p[i] += delta;
            let k = KernelSpec::from_log_params(gp.kernel().kind, p);
            GpModel::condition(k, gp.train_x().to_vec(), gp.train_y().to_vec(), gp.mean_const())
                .expect("well conditioned")
                .log_marginal_likelihood()
        };
        mll_err = mll_err.max(rel_err(g[i], (at(h) - at(-h)) / (2.0 * h)));
    }

    // Path gradients.
    let batch = sample_paths(&gp, 8, 1024, &SeedStream::new(5)).expect("valid batch");
    let mut path_err: f64 = 0.0;
    for tau in 0..batch.n_paths() {
        for k in 0..8 {
            let x = 0.05 + 0.9 * k as f64 / 7.0;
            let g = batch.path_gradient(tau, &[x]).expect("in range")[0];
            let fd = (batch.value(tau, &[x + h]) - batch.value(tau, &[x - h])) / (2.0 * h);
            path_err = path_err.max(rel_err(g, fd));
        }
    }

    // Rollout objective with respect to 100 random network parameters.
    let gp2 = {
        let xs = vec![vec![0.2, 0.3], vec![0.7, 0.4], vec![0.5, 0.9], vec![0.1, 0.8]];
        let ys = vec![0.3, -0.2, 0.9, 0.1];
        let k = KernelSpec::new(KernelKind::Matern52, 0.3, 1.0, 1e-3).expect("valid kernel");
        GpModel::condition(k, xs, ys, 0.0).expect("well conditioned")
    };
    let batch = sample_paths(&gp2, 4, 256, &SeedStream::new(6)).expect("valid batch");
    let mut params = PolicyParams::init(2, 16, Head::Continuous, &SeedStream::new(7)).expect("valid init");
    let cost = CostModel::euclidean(0.5);
    let history = (gp2.train_x(), gp2.train_y());
    let cost_history = vec![gp2.train_x()[3].clone()];
    let opts = RolloutOptions {
        horizon: 3,
        ..Default::default()
    };
    let res = rollout(&params, &batch, history, &cost_history, &cost, &opts).expect("rollout");
    let grad = backward(&res, &params);
    let mut rng = SeedStream::new(8).rng();
    let mut policy_err: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.random_range(0..params.len());
        let orig = params.values[i];
        params.values[i] = orig + h;
        let up = rollout(&params, &batch, history, &cost_history, &cost, &opts).expect("rollout").objective;
        params.values[i] = orig - h;
        let down = rollout(&params, &batch, history, &cost_history, &cost, &opts).expect("rollout").objective;
        params.values[i] = orig;
        policy_err = policy_err.max(rel_err(grad[i], (up - down) / (2.0 * h)));
    }

    vec![
        Check::below("rollout objective gradient, 100 parameters (max rel. error)", policy_err, 1e-3),
        Check::below("marginal likelihood gradient (max rel. error)", mll_err, 1e-5),
        Check::below("path gradient (max rel. error)", path_err, 1e-4),
    ]
}

fn costs() -> Vec<Check> {
    let euc = CostModel::euclidean(1.0);
    let man = CostModel::manhattan(2.0).with_radius(0.5);
    let spot = CostModel::spotlight(0.1);
    let nm = |d: f64, m: f64| CostModel::nonmarkov_euclidean(1.0, d, m);
    let none: Option<&mut StreamRng> = None;
    let path = vec![vec![0.0, 0.3], vec![0.0, 0.6]];
    let origin = vec![vec![0.0, 0.0]];
    // History whose cumulative Markov cost is 2.5 (resp. 1.9), ending at 0.
    let hist = |c: f64| vec![vec![0.0, 0.0], vec![c, 0.0], vec![0.0, 0.0]];
    vec![
        Check::exact("euclidean 3-4-5", euc.markov_cost(&[0.0, 0.0], &[3.0, 4.0], none), 5.0),
        Check::exact("manhattan k=2 r=0.5", man.markov_step(&[0.0, 0.0], &[1.0, 1.0]), 3.0),
        Check::exact("spotlight inside", spot.markov_step(&[0.0, 0.0], &[0.05, 0.0]), 0.0),
        Check::exact("spotlight outside", spot.markov_step(&[0.0, 0.0], &[0.2, 0.0]), f64::INFINITY),
        Check::exact("spotlight boundary feasible", f64::from(u8::from(spot.feasible(&[0.0], &[0.1]))), 1.0),
        Check::exact("spotlight just outside", f64::from(u8::from(spot.feasible(&[0.0], &[0.100001]))), 0.0),
        Check::exact(
            "non-Markov discount fires",
            nm(0.5, 2.0).non_markov_cost(&hist(1.25), &[1.0, 0.0]).unwrap_or(f64::NAN),
            0.5,
        ),
        Check::exact(
            "non-Markov discount off",
            nm(0.5, 2.0).non_markov_cost(&hist(0.95), &[1.0, 0.0]).unwrap_or(f64::NAN),
            1.0,
        ),
        Check::exact(
            "trajectory, collinear",
            euc.trajectory_cost(&origin, &path, &[0.0, 0.9]).unwrap_or(f64::NAN),
            0.9,
        ),
        Check::exact(
            "trajectory, L = 0",
            euc.trajectory_cost(&origin, &[], &[3.0, 4.0]).unwrap_or(f64::NAN),
            5.0,
        ),
        Check::exact(
            "non-Markov trajectory with clamping",
            nm(0.5, 0.5).trajectory_cost(&origin, &path, &[0.0, 0.9]).unwrap_or(f64::NAN),
            0.6,
        ),
    ]
}
