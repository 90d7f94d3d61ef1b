use crate::autodiff::{fft, Tensor, C64};
use crate::error::{Error, Result};

use super::{ReconImage, SamplingMask, SensitivityMaps};

/// Per-coil k-space measurements: one complex `H×W` grid per coil, stored as `[N,H,W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCoilKSpace {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<C64>,
}

impl MultiCoilKSpace {
    pub fn new(coils: usize, height: usize, width: usize, data: Vec<C64>) -> Result<Self> {
        if coils == 0 {
            return Err(Error::invalid("k-space needs at least one coil"));
        }
        if data.len() != coils * height * width {
            return Err(Error::shape(
                "kspace",
                format!(
                    "{coils} coils of {height}x{width} need {} samples, got {}",
                    coils * height * width,
                    data.len()
                ),
            ));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("k-space contains NaN or Inf".into()));
        }
        Ok(Self {
            coils,
            height,
            width,
            data,
        })
    }

    pub fn zeros(coils: usize, height: usize, width: usize) -> Self {
        Self {
            coils,
            height,
            width,
            data: vec![C64::new(0.0, 0.0); coils * height * width],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [n, h, w] = t.shape() else {
            return Err(Error::shape(
                "kspace",
                format!("expected [N,H,W], got {:?}", t.shape()),
            ));
        };
        let data = t
            .as_complex()
            .ok_or_else(|| Error::invalid("k-space tensor must be complex"))?;
        Self::new(*n, *h, *w, data.to_vec())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::complex(&[self.coils, self.height, self.width], self.data.clone())
            .expect("validated")
    }

    pub fn num_coils(&self) -> usize {
        self.coils
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn coil(&self, i: usize) -> &[C64] {
        let n = self.plane_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn coil_mut(&mut self, i: usize) -> &mut [C64] {
        let n = self.plane_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    /// `‖k_i‖₂` for every coil.
    pub fn coil_norms(&self) -> Vec<f64> {
        (0..self.coils)
            .map(|i| {
                self.coil(i)
                    .iter()
                    .map(|v| v.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.coils == other.coils && self.height == other.height && self.width == other.width
    }

    /// Elementwise sum, e.g. measurements plus a perturbation.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_geometry(other) {
            return Err(Error::shape(
                "kspace_add",
                format!(
                    "{}x{}x{} vs {}x{}x{}",
                    self.coils, self.height, self.width, other.coils, other.height, other.width
                ),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self { data, ..*self })
    }

    /// Zeroes every unsampled column in every coil (the operator `k ↦ k ⊙ M`).
    pub fn apply_mask(&self, mask: &SamplingMask) -> Result<Self> {
        if mask.width() != self.width {
            return Err(Error::shape(
                "apply_mask",
                format!(
                    "mask width {} vs k-space width {}",
                    mask.width(),
                    self.width
                ),
            ));
        }
        let mut out = self.clone();
        let cols = mask.columns();
        for row in out.data.chunks_exact_mut(self.width) {
            for (v, &keep) in row.iter_mut().zip(cols) {
                if !keep {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        Ok(out)
    }

    /// Coil images `x_i = ifft2c(k_i)`.
    pub fn coil_images(&self) -> Vec<Vec<C64>> {
        (0..self.coils)
            .map(|i| fft::ifft2c(self.coil(i), self.height, self.width))
            .collect()
    }

    /// Root-sum-of-squares image of the inverse-transformed coils.
    pub fn rss_image(&self) -> ReconImage {
        let imgs = self.coil_images();
        rss_combine(&imgs, self.height, self.width).expect("consistent geometry")
    }
}

/// `X = sqrt(Σ_i |x_i|²)` voxelwise.
pub fn rss_combine(coil_images: &[Vec<C64>], height: usize, width: usize) -> Result<ReconImage> {
    if coil_images.is_empty() {
        return Err(Error::invalid("rss_combine needs at least one coil"));
    }
    let n = height * width;
    if let Some(bad) = coil_images.iter().find(|c| c.len() != n) {
        return Err(Error::shape(
            "rss_combine",
            format!("coil has {} voxels, expected {n}", bad.len()),
        ));
    }
    let mut acc = vec![0.0; n];
    for c in coil_images {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v.norm_sqr();
        }
    }
    acc.iter_mut().for_each(|v| *v = v.sqrt());
    ReconImage::new(height, width, acc)
}

/// Fully sampled coil k-space `k_i = fft2c(S_i ⊙ image)`.
pub fn synthesize_kspace(image: &ReconImage, maps: &SensitivityMaps) -> Result<MultiCoilKSpace> {
    let (h, w) = (image.height(), image.width());
    if maps.height() != h || maps.width() != w {
        return Err(Error::shape(
            "synthesize_kspace",
            format!("image {h}x{w} vs maps {}x{}", maps.height(), maps.width()),
        ));
    }
    let mut data = Vec::with_capacity(maps.num_coils() * h * w);
    for i in 0..maps.num_coils() {
        let weighted: Vec<C64> = maps
            .coil(i)
            .iter()
            .zip(image.pixels())
            .map(|(s, &x)| s * x)
            .collect();
        data.extend(fft::fft2c(&weighted, h, w));
    }
    MultiCoilKSpace::new(maps.num_coils(), h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ReconImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ReconImage::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn single_coil_unit_map_roundtrip() {
        let img = random_image(8, 12, 1);
        let maps = SensitivityMaps::uniform(1, 8, 12);
        let k = synthesize_kspace(&img, &maps).unwrap();
        let back = k.rss_image();
        assert!(rel_err(back.pixels(), img.pixels()) < 1e-12);
    }

    #[test]
    fn complementary_two_coil_maps_combine_to_image() {
        let (h, w) = (6, 6);
        let m: Vec<C64> = (0..h * w)
            .map(|i| C64::from_polar(0.2 + 0.6 * (i as f64 / 36.0), i as f64 * 0.3))
            .collect();
        let other: Vec<C64> = m
            .iter()
            .map(|v| C64::new((1.0 - v.norm_sqr()).sqrt(), 0.0))
            .collect();
        let mut data = m.clone();
        data.extend(other);
        let maps = SensitivityMaps::new(2, h, w, data).unwrap();
        let img = random_image(h, w, 2);
        let back = synthesize_kspace(&img, &maps).unwrap().rss_image();
        assert!(rel_err(back.pixels(), img.pixels()) < 1e-12);
    }

    #[test]
    fn eight_coil_phantom_roundtrip() {
        let img = random_image(32, 32, 3);
        let maps = SensitivityMaps::simulate(8, 32, 32, 11);
        let back = synthesize_kspace(&img, &maps).unwrap().rss_image();
        assert!(rel_err(back.pixels(), img.pixels()) < 1e-8);
    }

    #[test]
    fn rss_examples() {
        let one = vec![vec![C64::new(3.0, -4.0)]];
        assert_eq!(rss_combine(&one, 1, 1).unwrap().pixels(), &[5.0]);
        let x = C64::new(1.0, 2.0);
        let two = vec![vec![x], vec![x]];
        let v = rss_combine(&two, 1, 1).unwrap().pixels()[0];
        assert!((v - 2f64.sqrt() * x.norm()).abs() < 1e-15);
        let pyth = vec![vec![C64::new(3.0, 0.0)], vec![C64::new(0.0, 4.0)]];
        assert_eq!(rss_combine(&pyth, 1, 1).unwrap().pixels(), &[5.0]);
        assert!(rss_combine(&[], 1, 1).is_err());
    }

    #[test]
    fn mask_examples() {
        let maps = SensitivityMaps::simulate(2, 8, 16, 1);
        let k = synthesize_kspace(&random_image(8, 16, 4), &maps).unwrap();
        assert_eq!(k.apply_mask(&SamplingMask::full(16)).unwrap(), k);
        let none = SamplingMask::from_columns(vec![false; 16], 1, 0.0).unwrap();
        assert!(k
            .apply_mask(&none)
            .unwrap()
            .data()
            .iter()
            .all(|v| v.norm() == 0.0));
        assert!(k.apply_mask(&SamplingMask::full(8)).is_err());
    }

    proptest! {
        #[test]
        fn masking_is_idempotent_and_contractive(seed in 0u64..10_000, accel in prop::sample::select(vec![4u32, 8])) {
            let maps = SensitivityMaps::simulate(3, 16, 32, seed);
            let k = synthesize_kspace(&random_image(16, 32, seed), &maps).unwrap();
            let mask = SamplingMask::cartesian(32, accel, 0.08, seed).unwrap();
            let once = k.apply_mask(&mask).unwrap();
            let twice = once.apply_mask(&mask).unwrap();
            prop_assert_eq!(&once, &twice);
            for (a, b) in once.coil_norms().iter().zip(k.coil_norms()) {
                prop_assert!(*a <= b);
            }
            // sampled columns are bit-identical
            for (i, (a, b)) in once.data().iter().zip(k.data()).enumerate() {
                if mask.columns()[i % 32] {
                    prop_assert_eq!(a, b);
                }
            }
        }

        #[test]
        fn rss_ignores_global_coil_phase(seed in 0u64..10_000, phi in -3.2f64..3.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coils: Vec<Vec<C64>> = (0..3)
                .map(|_| (0..20).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
                .collect();
            let base = rss_combine(&coils, 4, 5).unwrap();
            let mut rotated = coils.clone();
            let ph = C64::from_polar(1.0, phi);
            rotated[1].iter_mut().for_each(|v| *v *= ph);
            let other = rss_combine(&rotated, 4, 5).unwrap();
            for (a, b) in base.pixels().iter().zip(other.pixels()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
