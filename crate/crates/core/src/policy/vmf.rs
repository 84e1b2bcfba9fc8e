//! Von Mises–Fisher directions (Wood's rejection sampler).

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn uniform_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// Draw a unit vector from vMF(`mean`, `kappa`). `mean` must be a unit
/// vector. In one dimension the direction is `±mean` with odds `e^{2κ}`.
pub fn sample_vmf<R: Rng + ?Sized>(mean: &[f64], kappa: f64, rng: &mut R) -> Vec<f64> {
    let d = mean.len();
    if d == 1 {
        let p_plus = 1.0 / (1.0 + (-2.0 * kappa).exp());
        let s = if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 };
        return vec![s * mean[0]];
    }
    if kappa == 0.0 {
        return uniform_direction(d, rng);
    }
    let dm1 = (d - 1) as f64;
    // Numerically stable form of (−2κ + √(4κ² + (d−1)²)) / (d−1).
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("positive shape");
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    // Tangent direction: Gaussian with the mean component removed.
    let v = loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let proj: f64 = g.iter().zip(mean).map(|(a, m)| a * m).sum();
        let t: Vec<f64> = g.iter().zip(mean).map(|(a, m)| a - proj * m).collect();
        let n = norm(&t);
        if n > 1e-12 {
            break t.into_iter().map(|a| a / n).collect::<Vec<f64>>();
        }
    };
    let s = (1.0 - w * w).max(0.0).sqrt();
    mean.iter().zip(&v).map(|(m, t)| w * m + s * t).collect()
}

/// `clamp(x + magnitude · u, [0,1]^dim)` with `u ~ vMF(mean, κ)`. Without a
/// usable mean direction the draw is uniform on the sphere.
pub fn vmf_perturb<R: Rng + ?Sized>(
    x: &[f64],
    mean_direction: Option<&[f64]>,
    kappa: f64,
    magnitude: f64,
    rng: &mut R,
) -> Vec<f64> {
    if magnitude == 0.0 {
        return x.to_vec();
    }
    let dir = match mean_direction.map(|m| (m, norm(m))) {
        Some((m, n)) if n > 1e-12 => {
            let unit: Vec<f64> = m.iter().map(|a| a / n).collect();
            sample_vmf(&unit, kappa, rng)
        }
        _ => uniform_direction(x.len(), rng),
    };
    x.iter().zip(&dir).map(|(a, u)| (a + magnitude * u).clamp(0.0, 1.0)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
