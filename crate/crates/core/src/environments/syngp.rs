//! A frozen Gaussian-process prior draw used as a benchmark function.

use rand_distr::{Distribution, StandardNormal};

use crate::pathwise::FourierFeatures;
use crate::rng::SeedStream;
use crate::surrogate::{KernelKind, KernelSpec};

pub const SYNGP_FEATURES: usize = 2048;

/// `f(x) = Σᵢ wᵢ φᵢ(x)` for one fixed weight vector.
#[derive(Debug, Clone)]
pub struct RffField {
    features: FourierFeatures,
    weights: Vec<f64>,
}

impl RffField {
    pub fn sample_rbf(dim: usize, lengthscale: f64, signal_variance: f64, m: usize, stream: &SeedStream) -> crate::Result<Self> {
        let kernel = KernelSpec::new(KernelKind::Rbf, lengthscale, signal_variance, 1e-6)?;
        let mut rng = stream.fork_named("syngp").rng();
        let features = FourierFeatures::sample(&kernel, dim, m, &mut rng);
        let weights = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self { features, weights })
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.features.weighted_value(&self.weights, x)
    }

    /// Values on the `side × side` grid `(i/(side−1), j/(side−1))`, row `i`
    /// major, for a 2-D field. Splits `cos(a + b)` so the whole grid is two
    /// matrix products instead of `side² · M` cosines.
    pub fn grid_2d(&self, side: usize) -> Vec<f64> {
        assert_eq!(self.dim(), 2, "grid_2d needs a 2-D field");
        let m = self.features.len();
        let coords: Vec<f64> = (0..side).map(|i| grid_coord(i, side)).collect();
        let mut c = vec![0.0; side * m];
        let mut s = vec![0.0; side * m];
        let mut d = vec![0.0; side * m];
        let mut e = vec![0.0; side * m];
        for (i, &u) in coords.iter().enumerate() {
            for k in 0..m {
                let w = self.features.freq(k);
                let (sa, ca) = (w[0] * u).sin_cos();
                let (sb, cb) = (w[1] * u + self.features.phase(k)).sin_cos();
                let wk = self.weights[k] * self.features.scale();
                c[i * m + k] = wk * ca;
                s[i * m + k] = wk * sa;
                d[i * m + k] = cb;
                e[i * m + k] = sb;
            }
        }
        let mut out = vec![0.0; side * side];
        // out = C Dᵀ − S Eᵀ
        unsafe {
            matrixmultiply::dgemm(side, m, side, 1.0, c.as_ptr(), m as isize, 1, d.as_ptr(), 1, m as isize, 0.0, out.as_mut_ptr(), side as isize, 1);
            matrixmultiply::dgemm(side, m, side, -1.0, s.as_ptr(), m as isize, 1, e.as_ptr(), 1, m as isize, 1.0, out.as_mut_ptr(), side as isize, 1);
        }
        out
    }
}

pub(crate) fn grid_coord(i: usize, side: usize) -> f64 {
    if side <= 1 {
        0.5
    } else {
        i as f64 / (side - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_matches_pointwise() {
        let f = RffField::sample_rbf(2, 0.5, 1.0, 64, &SeedStream::new(3)).unwrap();
        let side = 7;
        let g = f.grid_2d(side);
        for i in 0..side {
            for j in 0..side {
                let v = f.eval(&[grid_coord(i, side), grid_coord(j, side)]);
                assert!((g[i * side + j] - v).abs() < 1e-12);
            }
        }
    }
}
