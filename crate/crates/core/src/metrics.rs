//! SSIM and PSNR, globally and restricted to annotated regions.
//!
//! SSIM follows the fastMRI evaluation convention: uniform `7×7` windows
//! evaluated wherever they fit entirely inside the image, `k1 = 0.01`,
//! `k2 = 0.03`, sample (N−1) covariance, and a data range equal to the
//! maximum of the reference image.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attack::RegionMask;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::mri::ReconImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRange {
    /// Maximum of the reference (first) image.
    PerTargetMax,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub ssim_window: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: DataRange,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            ssim_window: 7,
            k1: 0.01,
            k2: 0.03,
            data_range: DataRange::PerTargetMax,
        }
    }
}

impl MetricConfig {
    fn validate(&self) -> Result<()> {
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::invalid(format!(
                "SSIM window {} must be odd and >= 3",
                self.ssim_window
            )));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::invalid("SSIM constants k1, k2 must be positive"));
        }
        Ok(())
    }

    /// Resolves the data range against a reference image.
    pub fn range_for(&self, reference: &ReconImage) -> Result<f64> {
        let r = match self.data_range {
            DataRange::PerTargetMax => reference.max(),
            DataRange::Fixed(v) => v,
        };
        if !(r > 0.0) {
            return Err(Error::invalid(format!(
                "SSIM data range {r} must be positive"
            )));
        }
        Ok(r)
    }

    fn with_range(&self, r: f64) -> Self {
        Self {
            data_range: DataRange::Fixed(r),
            ..*self
        }
    }
}

fn check_same(op: &'static str, a: &ReconImage, b: &ReconImage) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::shape(
            op,
            format!(
                "{}x{} vs {}x{}",
                a.height(),
                a.width(),
                b.height(),
                b.width()
            ),
        ));
    }
    Ok(())
}

/// Summed-area table with a zero top row and left column.
fn integral(h: usize, w: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for r in 0..h {
        let mut row = 0.0;
        for c in 0..w {
            row += f(r * w + c);
            s[(r + 1) * (w + 1) + c + 1] = s[r * (w + 1) + c + 1] + row;
        }
    }
    s
}

fn box_sum(s: &[f64], w: usize, r: usize, c: usize, k: usize) -> f64 {
    let w1 = w + 1;
    s[(r + k) * w1 + c + k] - s[r * w1 + c + k] - s[(r + k) * w1 + c] + s[r * w1 + c]
}

/// Mean structural similarity of `test` against `reference`.
pub fn ssim(reference: &ReconImage, test: &ReconImage, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    check_same("ssim", reference, test)?;
    let (h, w, k) = (reference.height(), reference.width(), cfg.ssim_window);
    if h < k || w < k {
        return Err(Error::invalid(format!(
            "{h}x{w} image smaller than the {k}x{k} SSIM window"
        )));
    }
    let range = cfg.range_for(reference)?;
    let c1 = (cfg.k1 * range).powi(2);
    let c2 = (cfg.k2 * range).powi(2);
    let a = reference.pixels();
    let b = test.pixels();
    let sa = integral(h, w, |i| a[i]);
    let sb = integral(h, w, |i| b[i]);
    let saa = integral(h, w, |i| a[i] * a[i]);
    let sbb = integral(h, w, |i| b[i] * b[i]);
    let sab = integral(h, w, |i| a[i] * b[i]);
    let np = (k * k) as f64;
    let cov_norm = np / (np - 1.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let ux = box_sum(&sa, w, r, c, k) / np;
            let uy = box_sum(&sb, w, r, c, k) / np;
            let vx = cov_norm * (box_sum(&saa, w, r, c, k) / np - ux * ux);
            let vy = cov_norm * (box_sum(&sbb, w, r, c, k) / np - uy * uy);
            let vxy = cov_norm * (box_sum(&sab, w, r, c, k) / np - ux * uy);
            let num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2);
            let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(-1.0, 1.0))
}

/// SSIM over the tight bounding box of `region`, with the data range taken from the full reference.
pub fn region_ssim(
    reference: &ReconImage,
    test: &ReconImage,
    region: &RegionMask,
    cfg: &MetricConfig,
) -> Result<f64> {
    check_same("region_ssim", reference, test)?;
    let (r0, c0, rows, cols) = region.bounding_box();
    if region.height() != reference.height() || region.width() != reference.width() {
        return Err(Error::shape(
            "region_ssim",
            format!(
                "region {}x{} vs image {}x{}",
                region.height(),
                region.width(),
                reference.height(),
                reference.width()
            ),
        ));
    }
    if rows < cfg.ssim_window || cols < cfg.ssim_window {
        return Err(Error::invalid(format!(
            "region box {rows}x{cols} smaller than the {0}x{0} SSIM window",
            cfg.ssim_window
        )));
    }
    let range = cfg.range_for(reference)?;
    let a = reference.crop(r0, c0, rows, cols)?;
    let b = test.crop(r0, c0, rows, cols)?;
    ssim(&a, &b, &cfg.with_range(range))
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the images are identical.
pub fn psnr(reference: &ReconImage, test: &ReconImage, cfg: &MetricConfig) -> Result<f64> {
    check_same("psnr", reference, test)?;
    let range = cfg.range_for(reference)?;
    let n = reference.pixels().len() as f64;
    let mse: f64 = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / mse).log10())
}

/// PSNR over the bounding box of `region`, data range from the full reference.
pub fn region_psnr(
    reference: &ReconImage,
    test: &ReconImage,
    region: &RegionMask,
    cfg: &MetricConfig,
) -> Result<f64> {
    check_same("region_psnr", reference, test)?;
    let range = cfg.range_for(reference)?;
    let (r0, c0, rows, cols) = region.bounding_box();
    let a = reference.crop(r0, c0, rows, cols)?;
    let b = test.crop(r0, c0, rows, cols)?;
    psnr(&a, &b, &cfg.with_range(range))
}

/// SSIM between a constant `reference` `[H,W]` node and `test` `[H,W]` node, recorded on the tape.
///
/// Same definition as [`ssim`]: valid uniform windows via a fixed box
/// convolution, sample covariance, constants from `data_range`.
pub fn ssim_on_tape(
    tape: &mut Tape,
    reference: Var,
    test: Var,
    data_range: f64,
    cfg: &MetricConfig,
) -> Result<Var> {
    cfg.validate()?;
    let shape = tape.value(reference).shape().to_vec();
    let [h, w] = shape[..] else {
        return Err(Error::shape(
            "ssim_on_tape",
            format!("expected [H,W], got {shape:?}"),
        ));
    };
    let k = cfg.ssim_window;
    let np = (k * k) as f64;
    let cov_norm = np / (np - 1.0);
    let c1 = (cfg.k1 * data_range).powi(2);
    let c2 = (cfg.k2 * data_range).powi(2);
    let kernel = tape.constant(Tensor::real(&[1, 1, k, k], vec![1.0 / np; k * k])?);
    let a = tape.reshape(reference, &[1, h, w])?;
    let b = tape.reshape(test, &[1, h, w])?;
    let filt = |t: &mut Tape, x: Var| t.conv2d(x, kernel, None, 0);
    let aa = tape.mul(a, a)?;
    let bb = tape.mul(b, b)?;
    let ab = tape.mul(a, b)?;
    let ux = filt(tape, a)?;
    let uy = filt(tape, b)?;
    let uxx = filt(tape, aa)?;
    let uyy = filt(tape, bb)?;
    let uxy = filt(tape, ab)?;

    let ux2 = tape.mul(ux, ux)?;
    let uy2 = tape.mul(uy, uy)?;
    let uxuy = tape.mul(ux, uy)?;
    let vx = tape.sub(uxx, ux2)?;
    let vy = tape.sub(uyy, uy2)?;
    let vxy = tape.sub(uxy, uxuy)?;

    let n1 = tape.scale(uxuy, 2.0)?;
    let n1 = tape.shift(n1, c1)?;
    let n2 = tape.scale(vxy, 2.0 * cov_norm)?;
    let n2 = tape.shift(n2, c2)?;
    let d1 = tape.add(ux2, uy2)?;
    let d1 = tape.shift(d1, c1)?;
    let d2 = tape.add(vx, vy)?;
    let d2 = tape.scale(d2, cov_norm)?;
    let d2 = tape.shift(d2, c2)?;
    let num = tape.mul(n1, n2)?;
    let den = tape.mul(d1, d2)?;
    let map = tape.div(num, den)?;
    tape.mean(map)
}

/// Fixed weights selecting a region, for masked objectives.
pub(crate) fn region_weights(region: &RegionMask) -> Arc<Vec<f64>> {
    Arc::new(
        region
            .mask()
            .iter()
            .map(|&m| if m { 1.0 } else { 0.0 })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::RegionMask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> ReconImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ReconImage::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Direct per-window re-implementation of the SSIM formula.
    fn ssim_oracle(a: &ReconImage, b: &ReconImage, k: usize, range: f64) -> f64 {
        let (h, w) = (a.height(), a.width());
        let c1 = (0.01 * range).powi(2);
        let c2 = (0.03 * range).powi(2);
        let np = (k * k) as f64;
        let mut vals = Vec::new();
        for r in 0..=h - k {
            for c in 0..=w - k {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for dr in 0..k {
                    for dc in 0..k {
                        xs.push(a.get(r + dr, c + dc));
                        ys.push(b.get(r + dr, c + dc));
                    }
                }
                let mx = xs.iter().sum::<f64>() / np;
                let my = ys.iter().sum::<f64>() / np;
                let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / (np - 1.0);
                let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (np - 1.0);
                let cxy = xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| (x - mx) * (y - my))
                    .sum::<f64>()
                    / (np - 1.0);
                vals.push(
                    ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)),
                );
            }
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn self_similarity_is_one() {
        let x = random(20, 17, 1);
        assert!((ssim(&x, &x, &MetricConfig::default()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_oracle() {
        for seed in 0..5 {
            let a = random(16, 19, seed);
            let b = random(16, 19, seed + 100);
            let fast = ssim(&a, &b, &MetricConfig::default()).unwrap();
            let slow = ssim_oracle(&a, &b, 7, a.max());
            assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        }
    }

    #[test]
    fn heavy_noise_destroys_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<f64> = (0..64 * 64)
            .map(|i| 0.5 + 0.4 * ((i % 64) as f64 / 10.0).sin())
            .collect();
        let a = ReconImage::new(64, 64, base.clone()).unwrap();
        let range = a.max();
        // uniform noise with std range/2: half-width range·sqrt(3)/2
        let hw = range * 3f64.sqrt() / 2.0;
        let noisy: Vec<f64> = base
            .iter()
            .map(|v| (v + rng.random_range(-hw..hw)).abs())
            .collect();
        let b = ReconImage::new(64, 64, noisy).unwrap();
        assert!(ssim(&a, &b, &MetricConfig::default()).unwrap() < 0.5);
    }

    #[test]
    fn region_variants() {
        let a = random(32, 32, 7);
        let full = RegionMask::full(32, 32);
        let cfg = MetricConfig::default();
        assert_eq!(
            region_ssim(&a, &random(32, 32, 8), &full, &cfg).unwrap(),
            ssim(&a, &random(32, 32, 8), &cfg).unwrap()
        );

        let boxed = RegionMask::from_box(32, 32, 4, 6, 10, 12).unwrap();
        let mut px = random(32, 32, 9).into_pixels();
        for r in 4..14 {
            for c in 6..18 {
                px[r * 32 + c] = a.get(r, c);
            }
        }
        let b = ReconImage::new(32, 32, px).unwrap();
        assert!((region_ssim(&a, &b, &boxed, &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&a, &b, &cfg).unwrap() < 0.9);

        let tiny = RegionMask::from_box(32, 32, 0, 0, 5, 20).unwrap();
        assert!(region_ssim(&a, &b, &tiny, &cfg).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = random(8, 8, 1);
        let cfg = MetricConfig::default();
        assert_eq!(psnr(&a, &a, &cfg).unwrap(), f64::INFINITY);
        let r = a.max();
        let shifted = ReconImage::new(8, 8, a.pixels().iter().map(|v| v + r).collect()).unwrap();
        assert!(psnr(&a, &shifted, &cfg).unwrap().abs() < 1e-12);
        let b = random(8, 8, 2);
        let mse: f64 = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / 64.0;
        let oracle = 10.0 * (r * r / mse).log10();
        assert!((psnr(&a, &b, &cfg).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn scale_invariance_with_matching_range() {
        let a = random(16, 16, 3);
        let b = random(16, 16, 4);
        let s0 = ssim(&a, &b, &MetricConfig::default()).unwrap();
        let up = |x: &ReconImage| {
            ReconImage::new(16, 16, x.pixels().iter().map(|v| v * 7.5).collect()).unwrap()
        };
        let s1 = ssim(&up(&a), &up(&b), &MetricConfig::default()).unwrap();
        assert!((s0 - s1).abs() < 1e-12);
    }

    #[test]
    fn tape_ssim_matches_direct() {
        let a = random(12, 14, 5);
        let b = random(12, 14, 6);
        let mut t = Tape::new();
        let ra = t.constant(a.to_tensor());
        let rb = t.constant(b.to_tensor());
        let s = ssim_on_tape(&mut t, ra, rb, a.max(), &MetricConfig::default()).unwrap();
        let direct = ssim(&a, &b, &MetricConfig::default()).unwrap();
        assert!((t.value(s).item().unwrap() - direct).abs() < 1e-12);
    }
}
