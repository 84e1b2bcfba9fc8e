//! Summary statistics over seeds.

use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::environments::OPTIMUM_VALUE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("cannot aggregate zero runs".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { median, mean, std })
    }
}

/// Per-seed numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub final_value: f64,
    /// `final_value / 3`, the `(−1, 1)` scaling.
    pub final_value_scaled: f64,
    pub final_regret: f64,
    pub cumulative_regret: f64,
    pub cumulative_cost: f64,
    pub best_observed_value: f64,
}

impl RunMetrics {
    pub fn of(run: &RunResult) -> Self {
        Self {
            seed: run.seed,
            final_value: run.final_value,
            final_value_scaled: run.final_value / OPTIMUM_VALUE,
            final_regret: run.final_regret,
            cumulative_regret: run.records.iter().map(|r| r.regret).sum(),
            cumulative_cost: run.records.last().map_or(0.0, |r| r.cumulative_cost),
            best_observed_value: run.best_observed_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub runs: Vec<RunMetrics>,
    pub final_value: Aggregate,
    pub final_value_scaled: Aggregate,
    pub final_regret: Aggregate,
    pub cumulative_regret: Aggregate,
    pub cumulative_cost: Aggregate,
    pub best_observed_value: Aggregate,
}

/// Metrics of `result` together with `peers`, which must share its
/// configuration apart from the seed list.
pub fn compute_metrics(result: &RunResult, peers: &[RunResult]) -> Result<MetricsSummary> {
    let strip = |r: &RunResult| {
        let mut c = r.config.clone();
        c.run.seeds.clear();
        c.run.output_dir = None;
        c
    };
    let base = strip(result);
    if let Some(p) = peers.iter().find(|p| strip(p) != base) {
        return Err(Error::Precondition(format!(
            "run with seed {} has a different configuration than seed {}",
            p.seed, result.seed
        )));
    }
    let runs: Vec<RunMetrics> = std::iter::once(result).chain(peers).map(RunMetrics::of).collect();
    let agg = |f: fn(&RunMetrics) -> f64| Aggregate::of(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(MetricsSummary {
        final_value: agg(|m| m.final_value)?,
        final_value_scaled: agg(|m| m.final_value_scaled)?,
        final_regret: agg(|m| m.final_regret)?,
        cumulative_regret: agg(|m| m.cumulative_regret)?,
        cumulative_cost: agg(|m| m.cumulative_cost)?,
        best_observed_value: agg(|m| m.best_observed_value)?,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_alias() {
        let a = Aggregate::of(&[2.97, 2.99, 2.98]).unwrap();
        assert_eq!(a.median, 2.98);
        assert!((a.median / OPTIMUM_VALUE - 0.9933).abs() < 1e-4);
        assert_eq!(Aggregate::of(&[1.0, 3.0]).unwrap().median, 2.0);
        assert!(Aggregate::of(&[]).is_err());
    }
}
