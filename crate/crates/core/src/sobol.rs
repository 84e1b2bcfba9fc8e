//! Sobol low-discrepancy points with an optional random digital shift.
//!
//! Direction numbers follow the Joe & Kuo "new-joe-kuo-6" parameter set for
//! the first 64 dimensions. Points are produced in gray-code order with
//! 32-bit resolution, so point `i` of dimension 1 is the van der Corput
//! radical inverse of `i` (0, 0.5, 0.75, 0.25, ...).

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub const MAX_DIM: usize = 64;
const BITS: usize = 32;

/// `(degree s, polynomial coefficients a, initial direction integers m)` for
/// dimensions 2..=64.
const JOE_KUO: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
    (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]),
    (7, 14, &[1, 3, 1, 13, 9, 35, 107]),
    (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]),
    (7, 28, &[1, 3, 5, 3, 3, 13, 69]),
    (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]),
    (7, 37, &[1, 1, 3, 9, 25, 29, 41]),
    (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
    (7, 50, &[1, 3, 1, 3, 5, 53, 69]),
    (7, 55, &[1, 1, 5, 5, 23, 33, 13]),
    (7, 56, &[1, 1, 7, 7, 1, 61, 123]),
    (7, 59, &[1, 1, 7, 9, 13, 61, 49]),
    (7, 62, &[1, 3, 3, 5, 3, 55, 33]),
    (8, 14, &[1, 3, 1, 15, 31, 13, 49, 245]),
    (8, 21, &[1, 3, 5, 15, 31, 59, 63, 97]),
    (8, 22, &[1, 3, 1, 11, 11, 11, 77, 249]),
    (8, 38, &[1, 3, 1, 11, 27, 43, 71, 9]),
    (8, 47, &[1, 1, 7, 15, 21, 11, 81, 45]),
    (8, 49, &[1, 3, 7, 3, 25, 31, 65, 79]),
    (8, 50, &[1, 3, 1, 1, 19, 11, 3, 205]),
    (8, 52, &[1, 1, 5, 9, 19, 21, 29, 157]),
    (8, 56, &[1, 3, 7, 11, 1, 33, 89, 185]),
    (8, 67, &[1, 3, 3, 3, 15, 9, 79, 71]),
    (8, 70, &[1, 3, 7, 11, 15, 39, 119, 27]),
    (8, 84, &[1, 1, 3, 1, 11, 31, 97, 225]),
    (8, 97, &[1, 1, 1, 3, 23, 43, 57, 177]),
    (8, 103, &[1, 3, 7, 7, 17, 17, 37, 71]),
    (8, 115, &[1, 3, 1, 5, 27, 63, 123, 213]),
    (8, 122, &[1, 1, 3, 5, 11, 43, 53, 133]),
    (9, 8, &[1, 3, 5, 5, 29, 17, 47, 173, 479]),
    (9, 13, &[1, 3, 3, 11, 3, 1, 109, 9, 69]),
    (9, 16, &[1, 1, 1, 5, 17, 39, 23, 5, 343]),
    (9, 22, &[1, 3, 1, 5, 25, 15, 31, 103, 499]),
    (9, 25, &[1, 1, 1, 11, 11, 17, 63, 105, 183]),
    (9, 44, &[1, 1, 5, 11, 9, 29, 97, 231, 363]),
    (9, 47, &[1, 1, 5, 15, 19, 45, 41, 7, 383]),
    (9, 52, &[1, 3, 7, 7, 31, 19, 83, 137, 221]),
    (9, 55, &[1, 1, 1, 3, 23, 15, 111, 223, 83]),
    (9, 59, &[1, 1, 5, 13, 31, 15, 55, 25, 161]),
    (9, 62, &[1, 1, 3, 13, 25, 47, 39, 87, 257]),
];

/// A Sobol sequence generator for a fixed dimension.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
}

impl Sobol {
    /// Unscrambled sequence; the first point is the origin.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!(
                "sobol dimension {dim} unsupported (1..={MAX_DIM})"
            )));
        }
        let directions = (0..dim).map(direction_numbers).collect();
        Ok(Self {
            directions,
            shift: vec![0; dim],
        })
    }

    /// Sequence XOR-shifted by one random 32-bit word per dimension drawn
    /// from `stream`.
    pub fn scrambled(dim: usize, stream: &SeedStream) -> Result<Self> {
        let mut s = Self::new(dim)?;
        let mut rng = stream.rng();
        for word in &mut s.shift {
            *word = rng.random::<u32>();
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Point `index` of the sequence, written into `out`.
    pub fn point_into(&self, index: u32, out: &mut [f64]) {
        let gray = index ^ (index >> 1);
        for (d, (dirs, shift)) in self.directions.iter().zip(&self.shift).enumerate() {
            let mut x = 0u32;
            let mut g = gray;
            let mut k = 0;
            while g != 0 {
                if g & 1 == 1 {
                    x ^= dirs[k];
                }
                g >>= 1;
                k += 1;
            }
            out[d] = f64::from(x ^ shift) / 4_294_967_296.0;
        }
    }

    pub fn point(&self, index: u32) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.point_into(index, &mut out);
        out
    }

    /// First `n` points.
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n as u32).map(|i| self.point(i)).collect()
    }
}

/// `n` scrambled Sobol points in `[0,1)^dim`, deterministic in `stream`.
pub fn sobol_points(dim: usize, n: usize, stream: &SeedStream) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Config("sobol point count must be positive".into()));
    }
    Ok(Sobol::scrambled(dim, stream)?.points(n))
}

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (a >> (s - 1 - i)) & 1 == 1 {
                x ^= v[k - i];
            }
        }
        v[k] = x;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_dimension_is_van_der_corput() {
        let s = Sobol::new(1).unwrap();
        let pts: Vec<f64> = s.points(4).into_iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, 0.5, 0.75, 0.25]);
    }

    #[test]
    fn second_dimension_matches_reference_prefix() {
        // Reference values of the standard construction, dimension 2.
        let s = Sobol::new(2).unwrap();
        let d2: Vec<f64> = s.points(8).into_iter().map(|p| p[1]).collect();
        assert_eq!(d2, vec![0.0, 0.5, 0.25, 0.75, 0.375, 0.875, 0.125, 0.625]);
    }

    #[test]
    fn unsupported_dimension_is_config_error() {
        assert!(matches!(Sobol::new(0), Err(Error::Config(_))));
        assert!(matches!(Sobol::new(65), Err(Error::Config(_))));
        assert!(Sobol::new(64).is_ok());
    }

    #[test]
    fn every_dimension_is_a_0_2_net_in_one_dimension() {
        // Each 1-D projection of the first 2^k points hits every dyadic
        // interval of width 2^-k exactly once.
        let s = Sobol::new(MAX_DIM).unwrap();
        let pts = s.points(256);
        for d in 0..MAX_DIM {
            let mut seen = [false; 256];
            for p in &pts {
                let cell = (p[d] * 256.0) as usize;
                assert!(!seen[cell], "dim {d} cell {cell} hit twice");
                seen[cell] = true;
            }
        }
    }

    #[test]
    fn scrambling_is_deterministic_and_stays_in_unit_cube() {
        let stream = SeedStream::new(3).fork(9);
        let a = sobol_points(5, 100, &stream).unwrap();
        let b = sobol_points(5, 100, &stream).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
        let c = sobol_points(5, 100, &SeedStream::new(4).fork(9)).unwrap();
        assert_ne!(a, c);
    }
}
