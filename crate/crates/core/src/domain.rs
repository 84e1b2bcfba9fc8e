//! Input domains and the query/observation history.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]`. All optimization happens on the
/// normalized image `[0,1]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Domain("box must have at least one dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Domain(format!(
                    "bounds of coordinate {i} are not an interval: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval on every axis.
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn unit(dim: usize) -> Self {
        Self::cube(dim, 0.0, 1.0).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn normalize(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(raw)?;
        raw.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                if !(lo..=hi).contains(&v) {
                    return Err(Error::Domain(format!(
                        "coordinate {i} = {v} outside [{lo}, {hi}]"
                    )));
                }
                Ok((v - lo) / (hi - lo))
            })
            .collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(unit)?;
        unit.iter()
            .enumerate()
            .map(|(i, &u)| {
                if !(0.0..=1.0).contains(&u) {
                    return Err(Error::Domain(format!(
                        "normalized coordinate {i} = {u} outside [0, 1]"
                    )));
                }
                Ok(self.lower[i] + u * (self.upper[i] - self.lower[i]))
            })
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// `dims` categorical variables with `categories` levels each. A point is
/// a flat `dims * categories` one-hot matrix (row per dimension); its
/// continuous embedding puts level `c` at the cell center `(c + 0.5) / C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteDomain {
    pub dims: usize,
    pub categories: usize,
}

impl DiscreteDomain {
    pub fn new(dims: usize, categories: usize) -> Result<Self> {
        if dims == 0 || categories == 0 {
            return Err(Error::Domain(format!(
                "discrete domain needs positive sizes, got {dims}x{categories}"
            )));
        }
        Ok(Self { dims, categories })
    }

    pub fn cell_center(&self, level: usize) -> f64 {
        (level as f64 + 0.5) / self.categories as f64
    }

    /// Level whose cell contains the normalized coordinate `u`.
    pub fn level_of(&self, u: f64) -> usize {
        ((u * self.categories as f64).floor() as isize).clamp(0, self.categories as isize - 1)
            as usize
    }

    pub fn one_hot(&self, levels: &[usize]) -> Result<Vec<f64>> {
        if levels.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: levels.len(),
            });
        }
        let mut out = vec![0.0; self.dims * self.categories];
        for (d, &c) in levels.iter().enumerate() {
            if c >= self.categories {
                return Err(Error::Domain(format!(
                    "level {c} of dimension {d} exceeds {} categories",
                    self.categories
                )));
            }
            out[d * self.categories + c] = 1.0;
        }
        Ok(out)
    }

    /// Levels of a valid one-hot point.
    pub fn levels(&self, one_hot: &[f64]) -> Result<Vec<usize>> {
        if one_hot.len() != self.dims * self.categories {
            return Err(Error::DimensionMismatch {
                expected: self.dims * self.categories,
                got: one_hot.len(),
            });
        }
        one_hot
            .chunks(self.categories)
            .enumerate()
            .map(|(d, row)| {
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || zeros != self.categories - 1 {
                    return Err(Error::Domain(format!("row {d} is not one-hot")));
                }
                Ok(row.iter().position(|&v| v == 1.0).unwrap())
            })
            .collect()
    }

    pub fn embed(&self, one_hot: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .levels(one_hot)?
            .into_iter()
            .map(|c| self.cell_center(c))
            .collect())
    }

    /// Snap a continuous point to the nearest cell center.
    pub fn snap(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&u| self.cell_center(self.level_of(u))).collect()
    }

    pub fn is_cell_center(&self, x: &[f64]) -> bool {
        x.len() == self.dims
            && x.iter()
                .all(|&u| (u - self.cell_center(self.level_of(u))).abs() <= 1e-12)
    }
}

/// Append-only history `D_t`: normalized queries, observations and the cost
/// charged for each query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    observations: Vec<f64>,
    step_costs: Vec<f64>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(points: Vec<Vec<f64>>, observations: Vec<f64>) -> Result<Self> {
        if points.len() != observations.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: observations.len(),
            });
        }
        let mut d = Self::new();
        for (x, y) in points.into_iter().zip(observations) {
            d.push(x, y, 0.0)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64, step_cost: f64) -> Result<()> {
        if let Some(first) = self.points.first() {
            if first.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: x.len(),
                });
            }
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!("query {x:?} outside [0,1]^d")));
        }
        if !y.is_finite() {
            return Err(Error::Numerical(format!("non-finite observation {y}")));
        }
        if !(step_cost >= 0.0) {
            return Err(Error::Domain(format!("negative step cost {step_cost}")));
        }
        self.points.push(x);
        self.observations.push(y);
        self.step_costs.push(step_cost);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn step_costs(&self) -> &[f64] {
        &self.step_costs
    }

    pub fn last_point(&self) -> Option<&[f64]> {
        self.points.last().map(Vec::as_slice)
    }

    pub fn best_observation(&self) -> Option<f64> {
        self.observations.iter().copied().reduce(f64::max)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::SeedStream;
    use crate::sobol::sobol_points;

    #[test]
    fn ackley_box_midpoint() {
        let b = BoxDomain::cube(2, -32.768, 32.768).unwrap();
        assert_eq!(b.normalize(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn upper_bound_maps_to_one() {
        let b = BoxDomain::new(vec![0.0], vec![2.0]).unwrap();
        assert_eq!(b.normalize(&[2.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn out_of_bounds_names_coordinate() {
        let b = BoxDomain::cube(3, 0.0, 1.0).unwrap();
        let err = b.normalize(&[0.5, 1.5, 0.5]).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn sobol_round_trip() {
        let b = BoxDomain::new(vec![-5.0, -32.768, 0.0], vec![10.0, 32.768, 1e-3]).unwrap();
        for u in sobol_points(3, 256, &SeedStream::new(11)).unwrap() {
            let raw = b.denormalize(&u).unwrap();
            let back = b.denormalize(&b.normalize(&raw).unwrap()).unwrap();
            let err = raw.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn normalize_inverts_denormalize(
            lo in -100.0f64..100.0,
            width in 1e-3f64..100.0,
            u in 0.0f64..=1.0,
        ) {
            let b = BoxDomain::new(vec![lo], vec![lo + width]).unwrap();
            let raw = b.denormalize(&[u]).unwrap();
            let back = b.denormalize(&b.normalize(&raw).unwrap()).unwrap();
            prop_assert!((raw[0] - back[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_round_trip_and_validation() {
        let d = DiscreteDomain::new(2, 20).unwrap();
        let oh = d.one_hot(&[3, 19]).unwrap();
        assert_eq!(d.levels(&oh).unwrap(), vec![3, 19]);
        assert_eq!(d.embed(&oh).unwrap(), vec![3.5 / 20.0, 19.5 / 20.0]);
        let mut bad = oh.clone();
        bad[0] = 1.0;
        assert!(d.levels(&bad).is_err());
        assert!(d.one_hot(&[20, 0]).is_err());
    }

    #[test]
    fn snap_lands_on_centers() {
        let d = DiscreteDomain::new(2, 20).unwrap();
        let s = d.snap(&[0.0, 0.999]);
        assert_eq!(s, vec![0.025, 0.975]);
        assert!(d.is_cell_center(&s));
        assert!(!d.is_cell_center(&[0.5, 0.5]));
    }

    #[test]
    fn dataset_append_keeps_prefix() {
        let mut d = Dataset::new();
        d.push(vec![0.1, 0.2], 1.0, 0.0).unwrap();
        d.push(vec![0.3, 0.4], 2.0, 0.5).unwrap();
        let before = d.clone();
        d.push(vec![0.5, 0.6], 3.0, 0.1).unwrap();
        assert_eq!(&d.points()[..2], before.points());
        assert_eq!(&d.observations()[..2], before.observations());
        assert_eq!(&d.step_costs()[..2], before.step_costs());
        assert_eq!(d.best_observation(), Some(3.0));
    }

    #[test]
    fn dataset_rejects_bad_records() {
        let mut d = Dataset::new();
        d.push(vec![0.1, 0.2], 1.0, 0.0).unwrap();
        assert!(d.push(vec![0.1], 1.0, 0.0).is_err());
        assert!(d.push(vec![1.1, 0.2], 1.0, 0.0).is_err());
        assert!(d.push(vec![0.1, 0.2], f64::NAN, 0.0).is_err());
        assert!(d.push(vec![0.1, 0.2], 1.0, -1.0).is_err());
        assert_eq!(d.len(), 1);
    }
}
