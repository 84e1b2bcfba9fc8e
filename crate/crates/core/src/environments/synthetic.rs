//! Closed-form test functions on their conventional boxes.

use std::f64::consts::{E, PI};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Ackley,
    Alpine,
    HolderTable,
    Levy,
    StyblinskiTang,
    Cosine8,
    Hartmann6,
}

/// A test function in its usual orientation plus the box it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFn {
    pub kind: SyntheticKind,
    pub dim: usize,
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

impl SyntheticFn {
    /// Parse names such as `ackley2`, `ackley20`, `levy`, `hartmann6`.
    /// A missing dimension suffix means two dimensions.
    pub fn parse(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        let split = lower.find(|c: char| c.is_ascii_digit()).unwrap_or(lower.len());
        let (base, digits) = lower.split_at(split);
        let dim = if digits.is_empty() {
            None
        } else {
            Some(digits.parse::<usize>().map_err(|_| Error::Config(format!("bad dimension in environment name {name:?}")))?)
        };
        let (kind, dim) = match (base, dim) {
            ("ackley", d) => (SyntheticKind::Ackley, d.unwrap_or(2)),
            ("alpine", d) => (SyntheticKind::Alpine, d.unwrap_or(2)),
            ("holdertable", None | Some(2)) => (SyntheticKind::HolderTable, 2),
            ("levy", d) => (SyntheticKind::Levy, d.unwrap_or(2)),
            ("styblinskitang", d) => (SyntheticKind::StyblinskiTang, d.unwrap_or(2)),
            ("cosine", Some(8)) => (SyntheticKind::Cosine8, 8),
            ("hartmann", Some(6)) => (SyntheticKind::Hartmann6, 6),
            _ => return Err(Error::Config(format!("unknown environment {name:?}"))),
        };
        if dim == 0 {
            return Err(Error::Config(format!("environment {name:?} needs a positive dimension")));
        }
        Ok(Self { kind, dim })
    }

    pub fn name(&self) -> String {
        match self.kind {
            SyntheticKind::Ackley => format!("ackley{}", self.dim),
            SyntheticKind::Alpine => format!("alpine{}", self.dim),
            SyntheticKind::HolderTable => "holdertable".into(),
            SyntheticKind::Levy => format!("levy{}", self.dim),
            SyntheticKind::StyblinskiTang => format!("styblinskitang{}", self.dim),
            SyntheticKind::Cosine8 => "cosine8".into(),
            SyntheticKind::Hartmann6 => "hartmann6".into(),
        }
    }

    pub fn bounds(&self) -> BoxDomain {
        let (lo, hi) = match self.kind {
            SyntheticKind::Ackley => (-32.768, 32.768),
            SyntheticKind::Alpine | SyntheticKind::HolderTable | SyntheticKind::Levy => (-10.0, 10.0),
            SyntheticKind::StyblinskiTang => (-5.0, 5.0),
            SyntheticKind::Cosine8 => (-1.0, 1.0),
            SyntheticKind::Hartmann6 => (0.0, 1.0),
        };
        BoxDomain::cube(self.dim, lo, hi).expect("valid box")
    }

    /// All functions except Cosine8 are conventionally minimized.
    pub fn is_minimization(&self) -> bool {
        self.kind != SyntheticKind::Cosine8
    }

    /// Known global optimizers in raw coordinates.
    pub fn optimizers(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        match self.kind {
            SyntheticKind::Ackley | SyntheticKind::Alpine | SyntheticKind::Cosine8 => vec![vec![0.0; d]],
            SyntheticKind::Levy => vec![vec![1.0; d]],
            SyntheticKind::StyblinskiTang => vec![vec![-2.903534; d]],
            SyntheticKind::HolderTable => [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .iter()
                .map(|(a, b)| vec![a * 8.05502, b * 9.66459])
                .collect(),
            SyntheticKind::Hartmann6 => vec![vec![0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]],
        }
    }

    /// Value in the function's usual orientation at a raw point.
    pub fn eval_raw(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        match self.kind {
            SyntheticKind::Ackley => {
                let (a, b, c) = (20.0, 0.2, 2.0 * PI);
                let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
                let cs = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
                -a * (-b * sq.sqrt()).exp() - cs.exp() + a + E
            }
            SyntheticKind::Alpine => x.iter().map(|v| (v * v.sin() + 0.1 * v).abs()).sum(),
            SyntheticKind::HolderTable => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                -(x[0].sin() * x[1].cos() * (1.0 - r / PI).abs().exp()).abs()
            }
            SyntheticKind::Levy => {
                let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
                let n = w.len();
                let head = (PI * w[0]).sin().powi(2);
                let mid: f64 = w[..n - 1]
                    .iter()
                    .map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2)))
                    .sum();
                let tail = (w[n - 1] - 1.0).powi(2) * (1.0 + (2.0 * PI * w[n - 1]).sin().powi(2));
                head + mid + tail
            }
            SyntheticKind::StyblinskiTang => 0.5 * x.iter().map(|v| v.powi(4) - 16.0 * v * v + 5.0 * v).sum::<f64>(),
            SyntheticKind::Cosine8 => x.iter().map(|v| 0.1 * (5.0 * PI * v).cos() - v * v).sum(),
            SyntheticKind::Hartmann6 => -HARTMANN_ALPHA
                .iter()
                .zip(&HARTMANN_A)
                .zip(&HARTMANN_P)
                .map(|((alpha, a), p)| {
                    let inner: f64 = (0..6).map(|j| a[j] * (x[j] - p[j]).powi(2)).sum();
                    alpha * (-inner).exp()
                })
                .sum::<f64>(),
        }
    }

    /// Value to be maximized at a raw point.
    pub fn eval_max(&self, x: &[f64]) -> f64 {
        let v = self.eval_raw(x);
        if self.is_minimization() {
            -v
        } else {
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_optimal_values() {
        let cases = [
            ("ackley2", 0.0, 1e-12),
            ("alpine", 0.0, 0.0),
            ("holdertable", -19.2085, 1e-4),
            ("levy", 0.0, 1e-12),
            ("styblinskitang", -78.33233, 1e-4),
            ("cosine8", 0.8, 1e-12),
            ("hartmann6", -3.32237, 1e-5),
        ];
        for (name, value, tol) in cases {
            let f = SyntheticFn::parse(name).unwrap();
            for x in f.optimizers() {
                assert!((f.eval_raw(&x) - value).abs() <= tol, "{name}: {}", f.eval_raw(&x));
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for name in ["ackley2", "ackley4", "ackley20", "ackley50", "alpine2", "holdertable", "levy2", "styblinskitang2", "cosine8", "hartmann6"] {
            assert_eq!(SyntheticFn::parse(name).unwrap().name(), name);
        }
        assert!(SyntheticFn::parse("rosenbrock").is_err());
        assert!(SyntheticFn::parse("hartmann3").is_err());
    }
}
