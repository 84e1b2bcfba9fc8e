use lookahes_core::acquisition::baselines::{expected_improvement, expected_improvement_mc, normal_base_samples, optimize_baseline};
use lookahes_core::acquisition::lookahes::{lookahes_value, optimize_lookahes, PolicyState};
use lookahes_core::acquisition::msl::plan_msl;
use lookahes_core::acquisition::{AcqConfig, AcqKind, SearchSpace};
use lookahes_core::pathwise::{sample_paths, PathBatch};
use lookahes_core::policy::{rollout, ActionHead, Head, PolicyConfig, PolicyParams, RolloutOptions};
use lookahes_core::surrogate::{GpModel, KernelKind, KernelSpec};
use lookahes_core::{CostModel, Dataset, DiscreteDomain, SeedStream};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn gp_1d(xs: &[f64], ys: &[f64], lengthscale: f64, noise: f64) -> GpModel {
    let k = KernelSpec::new(KernelKind::Rbf, lengthscale, 1.0, noise).unwrap();
    GpModel::condition(k, xs.iter().map(|v| vec![*v]).collect(), ys.to_vec(), 0.0).unwrap()
}

fn history(gp: &GpModel) -> (Vec<Vec<f64>>, Vec<f64>) {
    (gp.train_x().to_vec(), gp.train_y().to_vec())
}

/// Two-level Monte Carlo estimate of `E_y[max_a μ_y(a)]` over a finite set
/// of actions, where `y ~ f(x)` is a noiseless fantasy at action index `xi`.
/// Inner draws come from the conditional Gaussian via Matheron's rule.
fn ehig_oracle(mean: &DVector<f64>, cov: &DMatrix<f64>, xi: usize, outer: usize, inner: usize, seed: u64) -> f64 {
    let n = mean.len();
    let chol = (cov + DMatrix::identity(n, n) * 1e-10).cholesky().unwrap();
    let l = chol.l();
    let mut rng = SeedStream::new(seed).rng();
    let sxx = cov[(xi, xi)];
    let mut total = 0.0;
    for _ in 0..outer {
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = mean[xi] + sxx.sqrt() * z;
        let mut acc = DVector::zeros(n);
        for _ in 0..inner {
            let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let f = mean + &l * z;
            acc += &f + cov.column(xi) * ((y - f[xi]) / sxx);
        }
        total += (acc / inner as f64).max();
    }
    total / outer as f64
}

#[test]
fn one_step_objective_matches_two_level_oracle() {
    let gp = gp_1d(&[0.05, 0.5, 0.95], &[0.2, -0.3, 0.4], 0.25, 1e-6);
    let domain = DiscreteDomain::new(1, 5).unwrap();
    let cells: Vec<Vec<f64>> = (0..5).map(|k| vec![domain.cell_center(k)]).collect();
    let mean = DVector::from_iterator(5, cells.iter().map(|c| gp.posterior_mean(c)));
    let cov = gp.posterior_cov(&cells);
    let xi = 1;

    let batch = sample_paths(&gp, 4096, 2048, &SeedStream::new(3)).unwrap();
    // Bayes action after observing y at cell `xi`: the argmax of the
    // updated posterior mean, encoded as confident logits.
    let mut logits = Vec::with_capacity(batch.n_paths() * 5);
    for tau in 0..batch.n_paths() {
        let y = batch.value(tau, &cells[xi]);
        let best = (0..5)
            .max_by(|&a, &b| {
                let ua = mean[a] + cov[(a, xi)] / cov[(xi, xi)] * (y - mean[xi]);
                let ub = mean[b] + cov[(b, xi)] / cov[(xi, xi)] * (y - mean[xi]);
                ua.total_cmp(&ub)
            })
            .unwrap();
        logits.extend((0..5).map(|k| if k == best { 10.0 } else { 0.0 }));
    }
    let params = PolicyParams::zeros(1, 8, Head::Discrete { categories: 5 });
    let (hx, hy) = history(&gp);
    let opts = RolloutOptions {
        horizon: 1,
        forced_first: Some(cells[xi].clone()),
        action_logits: Some(logits),
        ..Default::default()
    };
    let cost = CostModel::euclidean(1.0).with_lambda(0.0);
    let res = rollout(&params, &batch, (&hx, &hy), &[vec![0.5]], &cost, &opts).unwrap();

    let oracle = ehig_oracle(&mean, &cov, xi, 2000, 400, 11);
    assert!((-res.objective - oracle).abs() < 0.05, "pathwise {} oracle {}", -res.objective, oracle);
}

fn bumpy_gp() -> GpModel {
    let xs = [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| (-(x - 0.7f64).powi(2) / 0.05).exp()).collect();
    gp_1d(&xs, &ys, 0.2, 1e-4)
}

fn small_acq(horizon: usize, restarts: usize, grad_steps: usize) -> AcqConfig {
    AcqConfig {
        horizon,
        restarts,
        grad_steps,
        n_features: 256,
        ..Default::default()
    }
}

#[test]
fn training_lowers_the_objective() {
    let gp = bumpy_gp();
    let (hx, hy) = history(&gp);
    let space = SearchSpace::Continuous { dim: 1 };
    let cost = CostModel::euclidean(1.0).with_lambda(0.5);
    let pcfg = PolicyConfig {
        hidden: 16,
        ..Default::default()
    };
    let current = vec![vec![0.1]];
    for seed in 0..10 {
        let stream = SeedStream::new(seed);
        let batch = sample_paths(&gp, 16, 128, &stream.fork_named("paths")).unwrap();
        let mut state = PolicyState::new(&space, &pcfg, &stream).unwrap();
        let before = lookahes_value(&state.params, &batch, (&hx, &hy), &current, &cost, 2).unwrap();
        let after = state.train(&batch, (&hx, &hy), &current, &cost, 2, 30).unwrap();
        let check = lookahes_value(&state.params, &batch, (&hx, &hy), &current, &cost, 2).unwrap();
        assert!(after < before, "seed {seed}: {after} !< {before}");
        assert!((check - after).abs() < 1e-9);
    }
}

#[test]
fn zero_horizon_query_finds_the_mean_peak() {
    let gp = bumpy_gp();
    let (hx, hy) = history(&gp);
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let peak = *grid
        .iter()
        .max_by(|a, b| gp.posterior_mean(&[**a]).total_cmp(&gp.posterior_mean(&[**b])))
        .unwrap();
    let space = SearchSpace::Continuous { dim: 1 };
    let cost = CostModel::euclidean(1.0).with_lambda(0.0);
    let pcfg = PolicyConfig {
        hidden: 16,
        lr: 1e-2,
        ..Default::default()
    };
    let stream = SeedStream::new(5);
    let batch = sample_paths(&gp, 32, 256, &stream.fork_named("paths")).unwrap();
    let mut state = PolicyState::new(&space, &pcfg, &stream).unwrap();
    let acq = small_acq(0, 32, 300);
    let c = optimize_lookahes(&mut state, &batch, (&hx, &hy), &[vec![0.5]], &cost, &acq, &pcfg, &space, &stream).unwrap();
    assert!((c.query[0] - peak).abs() < 0.1, "query {} peak {peak}", c.query[0]);
}

fn dense_gp() -> GpModel {
    let xs: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 4.0 * (x - 0.35).powi(2)).collect();
    gp_1d(&xs, &ys, 0.3, 1e-4)
}

#[test]
fn one_step_msl_agrees_with_free_action_lookahes() {
    let gp = dense_gp();
    let (hx, hy) = history(&gp);
    let space = SearchSpace::Continuous { dim: 1 };
    let cost = CostModel::euclidean(1.0).with_lambda(0.0);
    let stream = SeedStream::new(8);
    let batch: PathBatch = sample_paths(&gp, 32, 512, &stream.fork_named("paths")).unwrap();
    let acq = small_acq(1, 32, 300);
    let pcfg = PolicyConfig {
        hidden: 16,
        action_head: ActionHead::Free,
        ..Default::default()
    };
    let mut state = PolicyState::new(&space, &pcfg, &stream).unwrap();
    let current = vec![vec![0.5]];
    let lh = optimize_lookahes(&mut state, &batch, (&hx, &hy), &current, &cost, &acq, &pcfg, &space, &stream).unwrap();
    let msl = plan_msl(&batch, &current, &cost, &acq, &stream).unwrap();
    assert!((lh.acq_value - msl.objective).abs() < 0.05, "lookahes {} msl {}", lh.acq_value, msl.objective);
}

#[test]
fn cost_of_chosen_cell_falls_as_lambda_grows() {
    let domain = DiscreteDomain::new(2, 12).unwrap();
    let space = SearchSpace::Discrete(domain);
    let pts = vec![vec![0.2, 0.7], vec![0.9, 0.1], vec![0.5, 0.5], vec![0.1, 0.1]];
    let ys = vec![0.3, 1.2, -0.2, 0.1];
    let k = KernelSpec::new(KernelKind::Matern52, 0.25, 1.0, 1e-3).unwrap();
    let gp = GpModel::condition(k, pts.clone(), ys.clone(), 0.0).unwrap();
    let data = Dataset::from_parts(pts, ys).unwrap();
    let current = vec![vec![domain.cell_center(0), domain.cell_center(11)]];
    let acq = AcqConfig {
        kind: AcqKind::Ei,
        mc_samples: 2048,
        ..Default::default()
    };
    let mut last = f64::INFINITY;
    for lambda in [0.0, 0.05, 0.2, 0.5, 1.0, 3.0] {
        let cost = CostModel::euclidean(1.0).with_lambda(lambda);
        let c = optimize_baseline(AcqKind::Ei, &gp, &data, &current, &cost, &acq, &space, &SeedStream::new(2)).unwrap();
        assert!(c.predicted_cost <= last + 1e-12, "λ {lambda}: cost {} after {last}", c.predicted_cost);
        last = c.predicted_cost;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mc_ei_tracks_closed_form(mu in -2.0f64..2.0, sigma in 0.05f64..2.0, best in -2.0f64..2.0) {
        let eps = normal_base_samples(8192, &SeedStream::new(21)).unwrap();
        let mc = expected_improvement_mc(mu, sigma, best, &eps);
        let exact = expected_improvement(mu, sigma, best);
        prop_assert!(mc >= 0.0);
        prop_assert!((mc - exact).abs() < 5e-3 * (1.0 + sigma), "mc {} exact {}", mc, exact);
    }

    #[test]
    fn ei_grows_with_mean(mu in -2.0f64..2.0, d in 0.01f64..1.0, sigma in 0.05f64..2.0, best in -2.0f64..2.0) {
        prop_assert!(expected_improvement(mu + d, sigma, best) >= expected_improvement(mu, sigma, best));
    }
}
