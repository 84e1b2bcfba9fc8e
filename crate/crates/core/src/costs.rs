//! History-dependent query costs.
//!
//! A Markov cost depends on the last query only:
//! `max(k (‖x_t − x_{t−1}‖_p − r), 0)`. The spotlight kind is the `k = ∞`
//! limit: moving within the closed ball of radius `r` is free, anything
//! further is infeasible. The non-Markov kind discounts a step by `d` once the
//! Markov cost accumulated along the history exceeds `m`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate of the soft wall that stands in for the spotlight constraint inside
/// gradient-based objectives.
pub const SPOTLIGHT_SOFT_RATE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Euclidean,
    Manhattan,
    Spotlight,
    NonmarkovEuclidean,
}

impl CostKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euclidean" => Some(Self::Euclidean),
            "manhattan" => Some(Self::Manhattan),
            "spotlight" => Some(Self::Spotlight),
            "nonmarkov_euclidean" => Some(Self::NonmarkovEuclidean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    pub k: f64,
    pub p: u32,
    pub r: f64,
    pub d: f64,
    pub m: f64,
    pub cost_noise_sigma: f64,
    pub lambda: f64,
}

impl CostModel {
    pub fn euclidean(k: f64) -> Self {
        Self {
            kind: CostKind::Euclidean,
            k,
            p: 2,
            r: 0.0,
            d: 0.0,
            m: 0.0,
            cost_noise_sigma: 0.0,
            lambda: 1.0,
        }
    }

    pub fn manhattan(k: f64) -> Self {
        Self {
            kind: CostKind::Manhattan,
            p: 1,
            ..Self::euclidean(k)
        }
    }

    pub fn spotlight(r: f64) -> Self {
        Self {
            kind: CostKind::Spotlight,
            k: f64::INFINITY,
            r,
            ..Self::euclidean(1.0)
        }
    }

    pub fn nonmarkov_euclidean(k: f64, d: f64, m: f64) -> Self {
        Self {
            kind: CostKind::NonmarkovEuclidean,
            d,
            m,
            ..Self::euclidean(k)
        }
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.cost_noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::Config(format!("cost.{name} must be nonnegative, got {v}")))
            }
        };
        nonneg("r", self.r)?;
        nonneg("d", self.d)?;
        nonneg("m", self.m)?;
        nonneg("cost_noise_sigma", self.cost_noise_sigma)?;
        nonneg("lambda", self.lambda)?;
        if self.p != 1 && self.p != 2 {
            return Err(Error::Config(format!("cost.p must be 1 or 2, got {}", self.p)));
        }
        match self.kind {
            CostKind::Spotlight => Ok(()),
            _ if !(self.k >= 0.0 && self.k.is_finite()) => Err(Error::Config(format!(
                "cost.k must be finite and nonnegative, got {}",
                self.k
            ))),
            CostKind::Euclidean if self.p != 2 || self.r != 0.0 => {
                Err(Error::Config("euclidean cost requires p = 2 and r = 0".into()))
            }
            CostKind::Manhattan if self.p != 1 || self.r != 0.0 => {
                Err(Error::Config("manhattan cost requires p = 1 and r = 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        match self.p {
            1 => diffs.map(f64::abs).sum(),
            _ => diffs.map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// False iff this is a spotlight model and `cur` lies outside the closed
    /// ball of radius `r` around `prev`.
    pub fn feasible(&self, prev: &[f64], cur: &[f64]) -> bool {
        self.kind != CostKind::Spotlight || self.distance(prev, cur) <= self.r
    }

    /// Noise-free Markov cost. Spotlight steps cost 0 when feasible and
    /// `f64::INFINITY` otherwise.
    pub fn markov_step(&self, prev: &[f64], cur: &[f64]) -> f64 {
        let dist = self.distance(prev, cur);
        if self.kind == CostKind::Spotlight {
            return if dist <= self.r { 0.0 } else { f64::INFINITY };
        }
        (self.k * (dist - self.r)).max(0.0)
    }

    /// Markov cost with the additive noise term drawn from `noise`, if given.
    pub fn markov_cost<R: Rng + ?Sized>(
        &self,
        prev: &[f64],
        cur: &[f64],
        noise: Option<&mut R>,
    ) -> f64 {
        self.markov_step(prev, cur) + self.noise_draw(noise)
    }

    /// Markov cost of the step into `cur`, discounted by `d` when the Markov
    /// cost accumulated along `history` exceeds `m`. Discounted steps are
    /// clamped at zero.
    pub fn non_markov_cost(&self, history: &[Vec<f64>], cur: &[f64]) -> Result<f64> {
        let prev = history
            .last()
            .ok_or_else(|| Error::Precondition("non-Markov cost needs a nonempty history".into()))?;
        let step = self.markov_step(prev, cur);
        if self.discount_active(history) {
            Ok((step - self.d).max(0.0))
        } else {
            Ok(step)
        }
    }

    fn cumulative_markov(&self, history: &[Vec<f64>]) -> f64 {
        history.windows(2).map(|w| self.markov_step(&w[0], &w[1])).sum()
    }

    fn discount_active(&self, history: &[Vec<f64>]) -> bool {
        self.d > 0.0 && self.cumulative_markov(history) > self.m
    }

    /// Noise-free cost of moving from the end of `history` to `cur` under
    /// this model's kind.
    pub fn step_cost(&self, history: &[Vec<f64>], cur: &[f64]) -> Result<f64> {
        match self.kind {
            CostKind::NonmarkovEuclidean => self.non_markov_cost(history, cur),
            _ => {
                let prev = history.last().ok_or_else(|| {
                    Error::Precondition("step cost needs a previous query".into())
                })?;
                Ok(self.markov_step(prev, cur))
            }
        }
    }

    /// Cost charged for a committed query: the step cost plus one noise
    /// draw, clamped at zero.
    pub fn committed_cost<R: Rng + ?Sized>(
        &self,
        history: &[Vec<f64>],
        cur: &[f64],
        noise: Option<&mut R>,
    ) -> Result<f64> {
        let base = self.step_cost(history, cur)?;
        Ok((base + self.noise_draw(noise)).max(0.0))
    }

    fn noise_draw<R: Rng + ?Sized>(&self, noise: Option<&mut R>) -> f64 {
        match noise {
            Some(rng) if self.cost_noise_sigma > 0.0 => {
                self.cost_noise_sigma * rng.sample::<f64, _>(StandardNormal)
            }
            _ => 0.0,
        }
    }

    /// Cost of the path `observed[last] → lookahead… → action`. Steps inside
    /// `observed` are sunk and not charged, though they count toward the
    /// non-Markov threshold.
    pub fn trajectory_cost(
        &self,
        observed: &[Vec<f64>],
        lookahead: &[Vec<f64>],
        action: &[f64],
    ) -> Result<f64> {
        if observed.is_empty() {
            return Err(Error::Precondition("trajectory cost needs an observed query".into()));
        }
        let mut path = observed.to_vec();
        let mut total = 0.0;
        for x in lookahead.iter().map(Vec::as_slice).chain(std::iter::once(action)) {
            total += self.step_cost(&path, x)?;
            path.push(x.to_vec());
        }
        Ok(total)
    }

    /// Differentiable stand-in for one step: returns the value and its
    /// gradient with respect to `cur` (the gradient with respect to `prev`
    /// is its negation). Spotlight uses the soft wall
    /// `SPOTLIGHT_SOFT_RATE · max(dist − r, 0)`. `discounted` says whether
    /// the non-Markov discount applies to this step.
    pub fn soft_step(&self, prev: &[f64], cur: &[f64], discounted: bool) -> (f64, Vec<f64>) {
        let dim = cur.len();
        let dist = self.distance(prev, cur);
        let rate = match self.kind {
            CostKind::Spotlight => SPOTLIGHT_SOFT_RATE,
            _ => self.k,
        };
        let mut value = rate * (dist - self.r);
        if discounted {
            value -= self.d;
        }
        if value <= 0.0 || dist == 0.0 {
            return (value.max(0.0), vec![0.0; dim]);
        }
        let grad = match self.p {
            1 => cur
                .iter()
                .zip(prev)
                .map(|(c, p)| rate * sign(c - p))
                .collect(),
            _ => cur
                .iter()
                .zip(prev)
                .map(|(c, p)| rate * (c - p) / dist)
                .collect(),
        };
        (value, grad)
    }

    /// Soft trajectory cost along `observed[last] → points…` together with
    /// the gradient with respect to every entry of `points`. The non-Markov
    /// indicator is piecewise constant and contributes no gradient.
    pub fn soft_trajectory_cost(&self, observed: &[Vec<f64>], points: &[&[f64]]) -> (f64, Vec<Vec<f64>>) {
        let (steps, grads) = self.soft_trajectory_terms(observed, points);
        (steps.iter().sum(), grads)
    }

    /// Per-step soft costs along `observed[last] → points…` and the gradient
    /// of their sum with respect to every entry of `points`.
    pub fn soft_trajectory_terms(&self, observed: &[Vec<f64>], points: &[&[f64]]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let dim = points.first().map_or(0, |p| p.len());
        let mut grads = vec![vec![0.0; dim]; points.len()];
        let mut steps = Vec::with_capacity(points.len());
        let nonmarkov = self.kind == CostKind::NonmarkovEuclidean && self.d > 0.0;
        let mut cumulative = if nonmarkov { self.cumulative_markov(observed) } else { 0.0 };
        let mut prev: &[f64] = observed.last().expect("observed history is nonempty");
        for (j, cur) in points.iter().enumerate() {
            let discounted = nonmarkov && cumulative > self.m;
            let (v, g) = self.soft_step(prev, cur, discounted);
            steps.push(v);
            for i in 0..dim {
                grads[j][i] += g[i];
                if j > 0 {
                    grads[j - 1][i] -= g[i];
                }
            }
            if nonmarkov {
                cumulative += self.markov_step(prev, cur);
            }
            prev = cur;
        }
        (steps, grads)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::SeedStream;

    fn v(x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    #[test]
    fn euclidean_three_four_five() {
        let c = CostModel::euclidean(1.0);
        assert_eq!(c.markov_cost::<crate::rng::StreamRng>(&[0.0, 0.0], &[3.0, 4.0], None), 5.0);
    }

    #[test]
    fn manhattan_with_free_radius() {
        let c = CostModel::manhattan(2.0).with_radius(0.5);
        assert_eq!(c.markov_step(&[0.0, 0.0], &[1.0, 1.0]), 3.0);
    }

    #[test]
    fn spotlight_ball_is_closed() {
        let c = CostModel::spotlight(0.1);
        assert_eq!(c.markov_step(&[0.0], &[0.05]), 0.0);
        assert!(c.markov_step(&[0.0], &[0.2]).is_infinite());
        assert!(c.feasible(&[0.0], &[0.1]));
        assert!(!c.feasible(&[0.0], &[0.100001]));
        assert!(CostModel::euclidean(1.0).feasible(&[0.0], &[100.0]));
    }

    #[test]
    fn nonmarkov_indicator() {
        let c = CostModel::nonmarkov_euclidean(1.0, 0.5, 2.0);
        let fired = c
            .non_markov_cost(&[v(&[0.0, 0.0]), v(&[2.5, 0.0])], &[3.5, 0.0])
            .unwrap();
        assert_eq!(fired, 0.5);
        let off = c
            .non_markov_cost(&[v(&[0.0, 0.0]), v(&[1.9, 0.0])], &[2.9, 0.0])
            .unwrap();
        assert_eq!(off, 1.0);
        assert!(c.non_markov_cost(&[], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_discount_matches_markov() {
        let c = CostModel::nonmarkov_euclidean(1.3, 0.0, 0.0);
        let hist = [v(&[0.1, 0.2]), v(&[0.9, 0.4]), v(&[0.3, 0.3])];
        let cur = [0.6, 0.7];
        assert_eq!(
            c.non_markov_cost(&hist, &cur).unwrap(),
            c.markov_step(&hist[2], &cur)
        );
    }

    #[test]
    fn trajectory_collinear() {
        let c = CostModel::euclidean(1.0);
        let total = c
            .trajectory_cost(&[v(&[0.0, 0.0])], &[v(&[0.0, 0.3]), v(&[0.0, 0.6])], &[0.0, 0.9])
            .unwrap();
        assert!((total - 0.9).abs() < 1e-15);
    }

    #[test]
    fn trajectory_nonmarkov_clamps_discounted_step() {
        let c = CostModel::nonmarkov_euclidean(1.0, 0.5, 0.5);
        let total = c
            .trajectory_cost(&[v(&[0.0, 0.0])], &[v(&[0.0, 0.3]), v(&[0.0, 0.6])], &[0.0, 0.9])
            .unwrap();
        // Steps 1 and 2 see cumulative 0 and 0.3; step 3 sees 0.6 > 0.5 and
        // max(0.3 - 0.5, 0) = 0.
        assert!((total - 0.6).abs() < 1e-15);
    }

    #[test]
    fn trajectory_without_lookahead_is_single_step() {
        let c = CostModel::manhattan(2.0);
        let obs = [v(&[0.1, 0.1]), v(&[0.4, 0.2])];
        assert_eq!(
            c.trajectory_cost(&obs, &[], &[0.8, 0.9]).unwrap(),
            c.markov_step(&obs[1], &[0.8, 0.9])
        );
    }

    #[test]
    fn trajectory_depends_on_order() {
        let c = CostModel::euclidean(1.0);
        let obs = [v(&[0.0, 0.0])];
        let a = c
            .trajectory_cost(&obs, &[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[0.5, 0.5])
            .unwrap();
        let b = c
            .trajectory_cost(&obs, &[v(&[0.0, 1.0]), v(&[1.0, 0.0])], &[0.0, 0.0])
            .unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn committed_noise_is_seeded_and_nonnegative() {
        let c = CostModel::euclidean(1.0).with_noise(0.5);
        let hist = [v(&[0.0, 0.0])];
        let s = SeedStream::new(3);
        let a = c.committed_cost(&hist, &[0.0, 0.0], Some(&mut s.rng())).unwrap();
        let b = c.committed_cost(&hist, &[0.0, 0.0], Some(&mut s.rng())).unwrap();
        assert_eq!(a, b);
        assert!(a >= 0.0);
    }

    #[test]
    fn soft_trajectory_gradient_matches_differences() {
        for model in [
            CostModel::euclidean(1.5),
            CostModel::manhattan(0.7),
            CostModel::spotlight(0.1),
            CostModel::nonmarkov_euclidean(1.0, 0.2, 0.3),
        ] {
            let obs = [v(&[0.2, 0.2]), v(&[0.3, 0.25])];
            let pts = [v(&[0.5, 0.4]), v(&[0.55, 0.9]), v(&[0.1, 0.7])];
            let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
            let (_, g) = model.soft_trajectory_cost(&obs, &refs);
            let h = 1e-6;
            for j in 0..pts.len() {
                for i in 0..2 {
                    let eval = |delta: f64| {
                        let mut p = pts.clone();
                        p[j][i] += delta;
                        let r: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
                        model.soft_trajectory_cost(&obs, &r).0
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    assert!((fd - g[j][i]).abs() < 1e-6, "{model:?} {j} {i}: {fd} vs {}", g[j][i]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn markov_nonneg_and_zero_inside_radius(
            k in 0.0f64..10.0, r in 0.0f64..1.0,
            a in proptest::collection::vec(0.0f64..1.0, 3),
            b in proptest::collection::vec(0.0f64..1.0, 3),
        ) {
            let c = CostModel::nonmarkov_euclidean(k, 0.0, 0.0).with_radius(r);
            let cost = c.markov_step(&a, &b);
            prop_assert!(cost >= 0.0);
            if c.distance(&a, &b) <= r {
                prop_assert_eq!(cost, 0.0);
            }
        }

        #[test]
        fn markov_monotone_in_distance(k in 0.0f64..10.0, r in 0.0f64..0.5, s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let c = CostModel::nonmarkov_euclidean(k, 0.0, 0.0).with_radius(r);
            let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
            prop_assert!(c.markov_step(&[0.0], &[lo]) <= c.markov_step(&[0.0], &[hi]));
        }

        #[test]
        fn nonmarkov_lower_bound(
            d in 0.0f64..1.0, m in 0.0f64..2.0,
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 2), 2..6),
        ) {
            let c = CostModel::nonmarkov_euclidean(1.0, d, m);
            let (hist, cur) = pts.split_at(pts.len() - 1);
            let nm = c.non_markov_cost(hist, &cur[0]).unwrap();
            let mk = c.markov_step(hist.last().unwrap(), &cur[0]);
            prop_assert!(nm >= mk - d - 1e-15);
            prop_assert!(nm <= mk);
        }
    }
}
