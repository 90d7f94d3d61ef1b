use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::autodiff::C64;
use crate::error::{Error, Result};

use super::{MultiCoilKSpace, ReconImage};

/// Additive complex Gaussian thermal noise, `sigma` per real/imaginary component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma {sigma} must be >= 0")));
        }
        Ok(Self { sigma, seed })
    }
}

pub fn add_thermal_noise(k: &MultiCoilKSpace, noise: &NoiseModel) -> Result<MultiCoilKSpace> {
    if !(noise.sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "noise sigma {} must be >= 0",
            noise.sigma
        )));
    }
    let mut out = k.clone();
    if noise.sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for v in out.data_mut() {
        *v += C64::new(normal.sample(&mut rng), normal.sample(&mut rng));
    }
    Ok(out)
}

fn background_median(image: &ReconImage, background: &[bool]) -> Result<f64> {
    if background.len() != image.pixels().len() {
        return Err(Error::shape(
            "estimate_background_noise",
            format!(
                "mask has {} voxels, image has {}",
                background.len(),
                image.pixels().len()
            ),
        ));
    }
    let mut vals: Vec<f64> = image
        .pixels()
        .iter()
        .zip(background)
        .filter_map(|(&v, &b)| b.then_some(v))
        .collect();
    if vals.is_empty() {
        return Err(Error::invalid("background mask selects no voxels"));
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let n = vals.len();
    Ok(if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    })
}

/// Noise sigma from background magnitudes of a single-coil image.
///
/// Background magnitudes of complex Gaussian noise are Rayleigh distributed
/// with median `σ·sqrt(2 ln 2)`, so `σ̂ = median / sqrt(2 ln 2)`.
pub fn estimate_background_noise(image: &ReconImage, background: &[bool]) -> Result<f64> {
    estimate_background_noise_rss(image, background, 1)
}

/// Noise sigma from background magnitudes of an `N`-coil RSS image.
///
/// RSS-combined background noise is `σ·χ_{2N}`; the estimator divides the
/// median magnitude by `sqrt(median(χ²_{2N}))`, which reduces to the Rayleigh
/// factor `sqrt(2 ln 2)` for one coil.
pub fn estimate_background_noise_rss(
    image: &ReconImage,
    background: &[bool],
    num_coils: usize,
) -> Result<f64> {
    if num_coils == 0 {
        return Err(Error::invalid("num_coils must be at least 1"));
    }
    let median = background_median(image, background)?;
    let dof = 2.0 * num_coils as f64;
    let chi2_median = if num_coils == 1 {
        2.0 * std::f64::consts::LN_2
    } else {
        ChiSquared::new(dof)
            .map_err(|e| Error::invalid(e.to_string()))?
            .inverse_cdf(0.5)
    };
    Ok(median / chi2_median.sqrt())
}

/// Per-coil η at which an adversarial budget `η‖k_i‖₂` equals the expected
/// thermal-noise norm `σ·sqrt(2·H·W)` of that coil.
pub fn thermal_equivalent_eta(sigma: f64, k: &MultiCoilKSpace) -> Vec<f64> {
    let expected = sigma * (2.0 * k.plane_len() as f64).sqrt();
    k.coil_norms()
        .into_iter()
        .map(|n| if n > 0.0 { expected / n } else { f64::INFINITY })
        .collect()
}
