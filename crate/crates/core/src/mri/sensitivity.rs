use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tensor, C64};
use crate::error::{Error, Result};

/// Complex coil sensitivity maps `[N,H,W]`, voxelwise RSS-normalized to 1 on their support.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMaps {
    coils: usize,
    height: usize,
    width: usize,
    data: Vec<C64>,
}

impl SensitivityMaps {
    pub fn new(coils: usize, height: usize, width: usize, data: Vec<C64>) -> Result<Self> {
        if coils == 0 {
            return Err(Error::invalid("sensitivity maps need at least one coil"));
        }
        if data.len() != coils * height * width {
            return Err(Error::shape(
                "sensitivity_maps",
                format!("{coils}x{height}x{width} maps got {} values", data.len()),
            ));
        }
        Ok(Self {
            coils,
            height,
            width,
            data,
        })
    }

    /// `N` identical real maps of value `1/sqrt(N)`.
    pub fn uniform(coils: usize, height: usize, width: usize) -> Self {
        let v = C64::new(1.0 / (coils as f64).sqrt(), 0.0);
        Self {
            coils,
            height,
            width,
            data: vec![v; coils * height * width],
        }
    }

    /// Smooth simulated coils: Gaussian magnitude bumps centred on a ring
    /// around the field of view, each with a linear phase ramp, normalized so
    /// the voxelwise RSS is exactly 1.
    pub fn simulate(coils: usize, height: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e75_17a3);
        let spin = rng.random_range(0.0..2.0 * PI);
        let params: Vec<(f64, f64, f64, f64, f64)> = (0..coils)
            .map(|i| {
                let a = spin + 2.0 * PI * i as f64 / coils as f64 + rng.random_range(-0.2..0.2);
                let radius = rng.random_range(0.8..1.1);
                let px = rng.random_range(-PI..PI);
                let py = rng.random_range(-PI..PI);
                let p0 = rng.random_range(-PI..PI);
                (radius * a.cos(), radius * a.sin(), px, py, p0)
            })
            .collect();
        let width_sigma = 0.7;
        let mut data = vec![C64::new(0.0, 0.0); coils * height * width];
        for r in 0..height {
            let y = 2.0 * (r as f64 + 0.5) / height as f64 - 1.0;
            for c in 0..width {
                let x = 2.0 * (c as f64 + 0.5) / width as f64 - 1.0;
                let mut sum = 0.0;
                for (i, &(cx, cy, px, py, p0)) in params.iter().enumerate() {
                    let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                    let mag = (-d2 / (2.0 * width_sigma * width_sigma)).exp() + 1e-3;
                    let phase = p0 + 0.5 * (px * x + py * y);
                    let v = C64::from_polar(mag, phase);
                    sum += v.norm_sqr();
                    data[(i * height + r) * width + c] = v;
                }
                let norm = sum.sqrt();
                for i in 0..coils {
                    data[(i * height + r) * width + c] /= norm;
                }
            }
        }
        Self {
            coils,
            height,
            width,
            data,
        }
    }

    /// Zeroes every map outside `support`.
    pub fn with_support(mut self, support: &[bool]) -> Result<Self> {
        let n = self.height * self.width;
        if support.len() != n {
            return Err(Error::shape(
                "sensitivity_support",
                format!("support has {} voxels, maps have {n}", support.len()),
            ));
        }
        for plane in self.data.chunks_exact_mut(n) {
            for (v, &s) in plane.iter_mut().zip(support) {
                if !s {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        Ok(self)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [n, h, w] = t.shape() else {
            return Err(Error::shape(
                "sensitivity_maps",
                format!("expected [N,H,W], got {:?}", t.shape()),
            ));
        };
        let data = t
            .as_complex()
            .ok_or_else(|| Error::invalid("sensitivity maps must be complex"))?;
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn coil(&self, i: usize) -> &[C64] {
        let n = self.height * self.width;
        &self.data[i * n..(i + 1) * n]
    }

    /// Voxelwise `sqrt(Σ_i |S_i|²)`.
    pub fn rss(&self) -> Vec<f64> {
        let n = self.height * self.width;
        let mut acc = vec![0.0; n];
        for plane in self.data.chunks_exact(n) {
            for (a, v) in acc.iter_mut().zip(plane) {
                *a += v.norm_sqr();
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }
}
