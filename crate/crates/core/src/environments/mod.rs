//! Benchmark objectives with calibrated outputs.
//!
//! Every environment takes normalized inputs in `[0,1]^d`, is maximized, and
//! maps its raw values affinely so the calibration sample spans `[−3, 3]`
//! with the best known value landing exactly on `3`.

pub mod image;
pub mod syngp;
pub mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BoxDomain, DiscreteDomain};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::sobol::sobol_points;

pub use image::{read_grayscale, write_pgm, ImageField};
pub use syngp::RffField;
pub use synthetic::{SyntheticFn, SyntheticKind};

/// Calibrated value of the best point of every environment.
pub const OPTIMUM_VALUE: f64 = 3.0;

/// Size of the sample used to find the raw minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    /// Points per axis of the dense grid used for `d ≤ 2`.
    pub grid_side: usize,
    /// Scrambled Sobol points used for `d > 2`.
    pub sobol_points: usize,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            grid_side: 512,
            sobol_points: 1 << 16,
        }
    }
}

#[derive(Clone)]
enum Field {
    Synthetic(SyntheticFn),
    Rff(RffField),
    Image(ImageField),
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Field {
    /// Raw value to be maximized at a normalized point.
    fn eval(&self, raw_box: &BoxDomain, x: &[f64]) -> f64 {
        match self {
            Self::Synthetic(f) => {
                let raw: Vec<f64> = raw_box
                    .lower()
                    .iter()
                    .zip(raw_box.upper())
                    .zip(x)
                    .map(|((lo, hi), u)| lo + u * (hi - lo))
                    .collect();
                f.eval_max(&raw)
            }
            Self::Rff(f) => f.eval(x),
            Self::Image(img) => img.sample(x),
            Self::Custom(f) => f(x),
        }
    }
}

/// A calibrated, maximized benchmark objective.
#[derive(Clone)]
pub struct Environment {
    pub name: String,
    /// Box the raw function is defined on; inputs are normalized against it.
    pub raw_box: BoxDomain,
    /// Set when queries are restricted to cell centers.
    pub discrete: Option<DiscreteDomain>,
    field: Field,
    raw_min: f64,
    raw_max: f64,
    /// Multiplier from raw to calibrated units (0 for a constant field).
    pub out_scale: f64,
    pub optimum_value: f64,
    /// Normalized location of the best point found during calibration.
    pub optimum_location: Vec<f64>,
    pub noise_sigma: f64,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("discrete", &self.discrete)
            .field("raw_min", &self.raw_min)
            .field("raw_max", &self.raw_max)
            .field("optimum_location", &self.optimum_location)
            .field("noise_sigma", &self.noise_sigma)
            .finish()
    }
}

impl Environment {
    fn calibrated(name: String, raw_box: BoxDomain, field: Field, known: Vec<Vec<f64>>, cal: &Calibration, stream: &SeedStream) -> Result<Self> {
        let dim = raw_box.dim();
        let eval = |x: &[f64]| field.eval(&raw_box, x);
        let (mut raw_min, mut best_v, mut best_x) = match &field {
            Field::Image(img) => {
                let mut lo = f64::INFINITY;
                let mut best = (f64::NEG_INFINITY, vec![0.5, 0.5]);
                for row in 0..img.height {
                    for col in 0..img.width {
                        let v = img.pixel(row, col);
                        lo = lo.min(v);
                        if v > best.0 {
                            best = (v, img.pixel_center(row, col).to_vec());
                        }
                    }
                }
                (lo, best.0, best.1)
            }
            _ => {
                let (values, points) = if dim <= 2 {
                    let side = cal.grid_side.max(2);
                    let values = match (&field, dim) {
                        (Field::Rff(f), 2) => f.grid_2d(side),
                        _ => (0..side.pow(dim as u32))
                            .into_par_iter()
                            .map(|k| eval(&grid_point(k, side, dim)))
                            .collect(),
                    };
                    (values, Sample::Grid { side, dim })
                } else {
                    let pts = sobol_points(dim, cal.sobol_points.max(1), &stream.fork_named("calibration"))?;
                    let values = pts.par_iter().map(|x| eval(x)).collect();
                    (values, Sample::Points(pts))
                };
                let mut lo = f64::INFINITY;
                let mut arg = 0;
                for (k, &v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::Numerical(format!("environment {name} is not finite on its calibration sample")));
                    }
                    lo = lo.min(v);
                    if v > values[arg] {
                        arg = k;
                    }
                }
                (lo, values[arg], points.point(arg))
            }
        };
        if !matches!(field, Field::Image(_)) {
            for raw in &known {
                let x = raw_box.normalize(raw)?;
                let v = eval(&x);
                raw_min = raw_min.min(v);
                if v > best_v {
                    best_v = v;
                    best_x = x;
                }
            }
            let (x, v) = compass_refine(&eval, best_x, best_v);
            best_x = x;
            best_v = v;
        }
        let span = best_v - raw_min;
        let out_scale = if span > 0.0 { 6.0 / span } else { 0.0 };
        Ok(Self {
            name,
            raw_box,
            discrete: None,
            field,
            raw_min,
            raw_max: best_v,
            out_scale,
            optimum_value: OPTIMUM_VALUE,
            optimum_location: best_x,
            noise_sigma: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.raw_box.dim()
    }

    pub fn raw_range(&self) -> (f64, f64) {
        (self.raw_min, self.raw_max)
    }

    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma must be nonnegative, got {sigma}")));
        }
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// Restrict queries to the centers of `categories` cells per axis. The
    /// calibration of the continuous field is kept, so a cell evaluates to
    /// the continuous value at its center.
    pub fn discretized(mut self, categories: usize) -> Result<Self> {
        let d = DiscreteDomain::new(self.dim(), categories)?;
        self.name = format!("{}-c{categories}", self.name);
        self.discrete = Some(d);
        Ok(self)
    }

    /// Noiseless calibrated value `f*(x)`, without domain checks.
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.out_scale == 0.0 {
            return 0.0;
        }
        OPTIMUM_VALUE - (self.raw_max - self.field.eval(&self.raw_box, x)) * self.out_scale
    }

    /// `3 − f*(a)`.
    pub fn regret(&self, a: &[f64]) -> f64 {
        self.optimum_value - self.value(a)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("coordinate {i} = {v} outside [0, 1]")));
        }
        if let Some(d) = &self.discrete {
            if !d.is_cell_center(x) {
                return Err(Error::Domain(format!("{x:?} is not a cell center of the {}-category grid", d.categories)));
            }
        }
        Ok(())
    }

    /// Calibrated value at `x` plus Gaussian noise when an RNG is given.
    pub fn eval<R: Rng + ?Sized>(&self, x: &[f64], rng: Option<&mut R>) -> Result<f64> {
        self.check(x)?;
        let v = self.value(x);
        Ok(match rng {
            Some(rng) if self.noise_sigma > 0.0 => v + Normal::new(0.0, self.noise_sigma).expect("valid sigma").sample(rng),
            _ => v,
        })
    }

    /// Evaluate a discrete environment at a one-hot encoded cell.
    pub fn eval_one_hot<R: Rng + ?Sized>(&self, one_hot: &[f64], rng: Option<&mut R>) -> Result<f64> {
        let d = self
            .discrete
            .ok_or_else(|| Error::Precondition(format!("environment {} is continuous", self.name)))?;
        self.eval(&d.embed(one_hot)?, rng)
    }
}

/// Noiseless or noisy evaluation, as a free function.
pub fn env_eval<R: Rng + ?Sized>(env: &Environment, x: &[f64], rng: Option<&mut R>) -> Result<f64> {
    env.eval(x, rng)
}

enum Sample {
    Grid { side: usize, dim: usize },
    Points(Vec<Vec<f64>>),
}

impl Sample {
    fn point(&self, k: usize) -> Vec<f64> {
        match self {
            Self::Grid { side, dim } => grid_point(k, *side, *dim),
            Self::Points(p) => p[k].clone(),
        }
    }
}

/// Point `k` of the `side^dim` grid, last coordinate fastest.
fn grid_point(mut k: usize, side: usize, dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        x[i] = syngp::grid_coord(k % side, side);
        k /= side;
    }
    x
}

/// Derivative-free local ascent by compass search in the unit box, so the
/// calibration maximum sits on a local optimum rather than a grid node.
fn compass_refine(f: &impl Fn(&[f64]) -> f64, mut x: Vec<f64>, mut v: f64) -> (Vec<f64>, f64) {
    let mut step = 1e-3;
    while step > 1e-12 {
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + sign * step).clamp(0.0, 1.0);
                let w = f(&y);
                if w > v {
                    x = y;
                    v = w;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, v)
}

/// A named synthetic function, calibrated.
pub fn make_synthetic(name: &str, cal: &Calibration, stream: &SeedStream) -> Result<Environment> {
    let f = SyntheticFn::parse(name)?;
    let known = f.optimizers();
    Environment::calibrated(f.name(), f.bounds(), Field::Synthetic(f), known, cal, stream)
}

/// A frozen RBF prior draw on `[0,1]²`.
pub fn make_syngp(lengthscale: f64, signal_variance: f64, cal: &Calibration, stream: &SeedStream) -> Result<Environment> {
    let field = RffField::sample_rbf(2, lengthscale, signal_variance, syngp::SYNGP_FEATURES, stream)?;
    Environment::calibrated("syngp".into(), BoxDomain::unit(2), Field::Rff(field), Vec::new(), cal, stream)
}

/// An image read from disk, blurred and interpolated.
pub fn load_image_env(path: &std::path::Path, blur_radius: usize, stream: &SeedStream) -> Result<Environment> {
    let img = read_grayscale(path)?.blurred(blur_radius);
    image_env(img, stream)
}

pub fn image_env(img: ImageField, stream: &SeedStream) -> Result<Environment> {
    Environment::calibrated("image".into(), BoxDomain::unit(2), Field::Image(img), Vec::new(), &Calibration::default(), stream)
}

/// A user-supplied function on `[0,1]^dim`, maximized.
pub fn custom_env(
    name: &str,
    dim: usize,
    f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    known_optima: Vec<Vec<f64>>,
    cal: &Calibration,
) -> Result<Environment> {
    Environment::calibrated(name.into(), BoxDomain::unit(dim), Field::Custom(Arc::new(f)), known_optima, cal, &SeedStream::new(0))
}

/// Environment selection as it appears in an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// A synthetic name (`ackley2`, `hartmann6`, ...), `syngp` or `image`.
    pub name: String,
    /// Observation noise standard deviation in calibrated units.
    pub noise_sigma: f64,
    /// Cells per axis for a discrete domain.
    pub categories: Option<usize>,
    /// Fixed seed for the environment itself; by default it follows the
    /// run seed.
    pub seed: Option<u64>,
    pub image_path: Option<PathBuf>,
    pub blur_radius: usize,
    pub syngp_lengthscale: f64,
    pub syngp_signal_variance: f64,
    pub calibration: Calibration,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "ackley2".into(),
            noise_sigma: 0.0,
            categories: None,
            seed: None,
            image_path: None,
            blur_radius: 50,
            syngp_lengthscale: 0.25f64.sqrt(),
            syngp_signal_variance: 1.0,
            calibration: Calibration::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("env.noise_sigma must be nonnegative, got {}", self.noise_sigma)));
        }
        if self.categories == Some(0) {
            return Err(Error::Config("env.categories must be positive".into()));
        }
        match self.name.as_str() {
            "syngp" => {
                if !(self.syngp_lengthscale > 0.0 && self.syngp_signal_variance > 0.0) {
                    return Err(Error::Config("env.syngp_lengthscale and syngp_signal_variance must be positive".into()));
                }
            }
            "image" => {
                if self.image_path.is_none() {
                    return Err(Error::Config("env.image_path is required for the image environment".into()));
                }
            }
            other => {
                SyntheticFn::parse(other).map_err(|_| Error::Config(format!("env.name: unknown environment {other:?}")))?;
            }
        }
        Ok(())
    }

    /// Build the environment; `stream` is used unless `seed` pins one.
    pub fn build(&self, stream: &SeedStream) -> Result<Environment> {
        self.validate()?;
        let stream = self.seed.map_or(*stream, SeedStream::new);
        let env = match self.name.as_str() {
            "syngp" => make_syngp(self.syngp_lengthscale, self.syngp_signal_variance, &self.calibration, &stream)?,
            "image" => load_image_env(self.image_path.as_deref().expect("validated"), self.blur_radius, &stream)?,
            name => make_synthetic(name, &self.calibration, &stream)?,
        };
        let env = env.with_noise(self.noise_sigma)?;
        match self.categories {
            Some(c) => env.discretized(c),
            None => Ok(env),
        }
    }
}
