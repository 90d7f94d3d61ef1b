use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::RegionMask;
use crate::error::{Error, Result};
use crate::metrics::{region_ssim, MetricConfig};
use crate::mri::{synthesize_kspace, MultiCoilKSpace, ReconImage, SamplingMask, SensitivityMaps};

/// Smallest accepted annotation side, one pixel more than the SSIM window.
pub const MIN_BOX_SIDE: usize = 8;

/// Region SSIM a zero-filled 8× reconstruction must stay below for a phantom to be accepted.
pub const REJECTION_SSIM: f64 = 0.95;

const MAX_ATTEMPTS: u64 = 64;

/// Pixel-unit bounding box; `x` is the column and `y` the row of the top-left corner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub label: String,
}

impl AnnotationBox {
    pub fn region(&self, img_h: usize, img_w: usize) -> Result<RegionMask> {
        RegionMask::from_box(img_h, img_w, self.y, self.x, self.height, self.width)
    }

    fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y && row < self.y + self.height && col >= self.x && col < self.x + self.width
    }
}

/// A synthetic slice with coil maps, pathology-like annotations and an air mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: ReconImage,
    pub maps: SensitivityMaps,
    pub annotations: Vec<AnnotationBox>,
    pub background_mask: Vec<bool>,
    pub seed: u64,
}

impl Phantom {
    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn num_coils(&self) -> usize {
        self.maps.num_coils()
    }

    /// Fully sampled multi-coil k-space of the slice.
    pub fn kspace(&self) -> MultiCoilKSpace {
        synthesize_kspace(&self.image, &self.maps).expect("phantom geometry is consistent")
    }

    /// Region mask of the first annotation.
    pub fn annotation_region(&self) -> RegionMask {
        self.annotations[0]
            .region(self.height(), self.width())
            .expect("annotation validated at construction")
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        if self.maps.height() != h || self.maps.width() != w {
            return Err(Error::shape("phantom", "maps and image disagree in size"));
        }
        if self.background_mask.len() != h * w {
            return Err(Error::shape("phantom", "background mask size"));
        }
        if self.annotations.is_empty() {
            return Err(Error::invalid("phantom has no annotation"));
        }
        for a in &self.annotations {
            if a.width < MIN_BOX_SIDE
                || a.height < MIN_BOX_SIDE
                || a.x + a.width > w
                || a.y + a.height > h
            {
                return Err(Error::invalid(format!(
                    "annotation {a:?} is out of bounds or too small"
                )));
            }
        }
        for (i, &bg) in self.background_mask.iter().enumerate() {
            if bg {
                let (r, c) = (i / w, i % w);
                if self.image.pixels()[i] != 0.0
                    || self.annotations.iter().any(|a| a.contains(r, c))
                {
                    return Err(Error::invalid(format!(
                        "background voxel ({r},{c}) is not air"
                    )));
                }
            }
        }
        Ok(())
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Normalized radius; `< 1` inside.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        (u * u + v * v).sqrt()
    }
}

fn ellipse(rng: &mut ChaCha8Rng, cx: f64, cy: f64, a: (f64, f64), b: (f64, f64)) -> Ellipse {
    let phi: f64 = rng.random_range(-0.5..0.5);
    Ellipse {
        cx,
        cy,
        a: rng.random_range(a.0..a.1),
        b: rng.random_range(b.0..b.1),
        cos: phi.cos(),
        sin: phi.sin(),
    }
}

fn render(
    height: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<f64>, AnnotationBox, Vec<bool>)> {
    let norm = |r: usize, c: usize| {
        (
            2.0 * (c as f64 + 0.5) / width as f64 - 1.0,
            2.0 * (r as f64 + 0.5) / height as f64 - 1.0,
        )
    };
    let (bx, by) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
    let body = ellipse(rng, bx, by, (0.66, 0.82), (0.6, 0.8));
    let inner: Vec<(Ellipse, f64)> = (0..rng.random_range(2..4))
        .map(|_| {
            let cx = body.cx + rng.random_range(-0.35..0.35);
            let cy = body.cy + rng.random_range(-0.35..0.35);
            let e = ellipse(rng, cx, cy, (0.12, 0.3), (0.1, 0.25));
            let level = if rng.random_bool(0.5) {
                rng.random_range(0.7..0.9)
            } else {
                rng.random_range(0.12..0.25)
            };
            (e, level)
        })
        .collect();
    let gx: f64 = rng.random_range(-0.15..0.15);
    let gy: f64 = rng.random_range(-0.15..0.15);
    let wave_f: f64 = rng.random_range(1.0..2.5);
    let wave_p: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    let mut img = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let (x, y) = norm(r, c);
            if body.radius(x, y) >= 1.0 {
                continue;
            }
            let mut v = 0.5 + gx * x + gy * y + 0.05 * (wave_f * (x + y) + wave_p).sin();
            for (e, level) in &inner {
                let rr = e.radius(x, y);
                if rr < 1.0 {
                    // smooth shoulder inside the structure
                    let t = ((1.0 - rr) * 4.0).min(1.0);
                    v = v * (1.0 - t) + level * t;
                }
            }
            img[r * width + c] = v;
        }
    }

    // Annotation box strictly inside the body.
    let side_max = (height.min(width) / 2).max(MIN_BOX_SIDE);
    let side_min = (height.min(width) * 2 / 9).clamp(MIN_BOX_SIDE + 2, side_max);
    let bh = rng
        .random_range(side_min..=side_max.max(side_min))
        .min(side_max);
    let bw = rng
        .random_range(side_min..=side_max.max(side_min))
        .min(side_max);
    let mut placed = None;
    for _ in 0..200 {
        let y0 = rng.random_range(0..=height - bh);
        let x0 = rng.random_range(0..=width - bw);
        let corners = [
            (y0, x0),
            (y0, x0 + bw - 1),
            (y0 + bh - 1, x0),
            (y0 + bh - 1, x0 + bw - 1),
        ];
        if corners.iter().all(|&(r, c)| {
            let (x, y) = norm(r, c);
            body.radius(x, y) < 0.92
        }) {
            placed = Some((x0, y0));
            break;
        }
    }
    let (x0, y0) = placed?;

    // Ligament-like structure: two thin bright parallel bands across the box,
    // one of them interrupted, plus a small dark focal lesion.
    let psi: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (dx, dy) = (psi.cos(), psi.sin());
    let (nx, ny) = (-dy, dx);
    let bcx = x0 as f64 + bw as f64 / 2.0 - 0.5;
    let bcy = y0 as f64 + bh as f64 / 2.0 - 0.5;
    let sep: f64 = rng.random_range(2.2..3.2);
    let band_sigma = 0.55;
    let half_len = 0.5 * (bw.min(bh) as f64) - 1.0;
    let gap_at: f64 = rng.random_range(-0.4..0.4) * half_len;
    let gap_half = rng.random_range(0.8..1.6);
    let lesion = (
        bcx + rng.random_range(-0.25..0.25) * bw as f64,
        bcy + rng.random_range(-0.25..0.25) * bh as f64,
    );
    let band_level: f64 = rng.random_range(0.95..1.1);
    for r in y0..y0 + bh {
        for c in x0..x0 + bw {
            let px = c as f64 - bcx;
            let py = r as f64 - bcy;
            let along = px * dx + py * dy;
            let across = px * nx + py * ny;
            if along.abs() > half_len {
                continue;
            }
            let mut p: f64 = 0.0;
            for (k, off) in [-0.5 * sep, 0.5 * sep].iter().enumerate() {
                if k == 1 && (along - gap_at).abs() < gap_half {
                    continue;
                }
                p = p.max((-(across - off).powi(2) / (2.0 * band_sigma * band_sigma)).exp());
            }
            let i = r * width + c;
            img[i] = img[i] * (1.0 - p) + band_level * p;
            let dl = ((c as f64 - lesion.0).powi(2) + (r as f64 - lesion.1).powi(2)).sqrt();
            if dl < 1.2 {
                img[i] *= 0.15;
            }
        }
    }

    let peak = img.iter().copied().fold(0.0, f64::max);
    img.iter_mut().for_each(|v| *v /= peak);

    let margin = 3.0 / (height.min(width) as f64 / 2.0);
    let annotation = AnnotationBox {
        x: x0,
        y: y0,
        width: bw,
        height: bh,
        label: "ligament".into(),
    };
    let background: Vec<bool> = (0..height * width)
        .map(|i| {
            let (r, c) = (i / width, i % width);
            let (x, y) = norm(r, c);
            body.radius(x, y) > 1.0 + margin && !annotation.contains(r, c) && img[i] == 0.0
        })
        .collect();
    if !background.iter().any(|&b| b) {
        return None;
    }
    Some((img, annotation, background))
}

fn box_is_underdetermined(
    image: &ReconImage,
    maps: &SensitivityMaps,
    ann: &AnnotationBox,
    seed: u64,
) -> Result<bool> {
    let (h, w) = (image.height(), image.width());
    let accel = 8;
    let mask =
        SamplingMask::cartesian(w, accel, SamplingMask::default_center_fraction(accel), seed)?;
    let zf = synthesize_kspace(image, maps)?
        .apply_mask(&mask)?
        .rss_image();
    let s = region_ssim(image, &zf, &ann.region(h, w)?, &MetricConfig::default())?;
    Ok(s < REJECTION_SSIM)
}

/// Deterministic synthetic slice: ellipse anatomy with smooth intensity
/// variation and a thin-band structure enclosed by one annotation box.
///
/// Candidates whose annotated region survives zero-filled 8× undersampling
/// (region SSIM ≥ [`REJECTION_SSIM`]) are rejected and regenerated from the
/// next seed in the same stream.
pub fn generate_phantom(
    height: usize,
    width: usize,
    num_coils: usize,
    seed: u64,
) -> Result<Phantom> {
    if height < 32 || width < 32 {
        return Err(Error::invalid(format!(
            "phantom size {height}x{width} below 32x32"
        )));
    }
    if num_coils == 0 {
        return Err(Error::invalid("phantom needs at least one coil"));
    }
    let maps = SensitivityMaps::simulate(num_coils, height, width, seed);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(attempt),
        );
        let Some((img, annotation, background)) = render(height, width, &mut rng) else {
            continue;
        };
        let image = ReconImage::new(height, width, img)?;
        if !box_is_underdetermined(&image, &maps, &annotation, seed)? {
            continue;
        }
        let p = Phantom {
            image,
            maps,
            annotations: vec![annotation],
            background_mask: background,
            seed,
        };
        p.validate()?;
        return Ok(p);
    }
    Err(Error::invalid(format!(
        "no acceptable phantom for seed {seed} after {MAX_ATTEMPTS} attempts"
    )))
}
