//! Adversarial attacks on reconstruction operators: per-coil L2-bounded
//! k-space noise found by projected gradient ascent, and worst-case in-plane
//! rotation found by grid search. Both objectives can be restricted to a
//! region of the output image.

mod noise;
mod region;
mod rotation;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var, C64};
use crate::error::{Error, Result};
use crate::metrics::{region_psnr, region_ssim, region_weights, MetricConfig};
use crate::mri::{MultiCoilKSpace, ReconImage, SamplingMask, SensitivityMaps};
use crate::recon::{ReconContext, ReconOperator};

pub use noise::{objective_and_gradient, pgd_noise_attack, project_per_coil, NoiseAttackConfig};
pub use region::{RegionMask, RegionProvenance};
pub use rotation::{
    rotate_image, rotate_kspace, rotation_attack, rotation_grid, RotationAttackConfig,
};
pub use sweep::{sweep, AttackKind, RegionMode, SweepJob, SweepRow, SweepSpec};

/// Everything an attack needs about one slice.
#[derive(Debug, Clone, Copy)]
pub struct AttackProblem<'a> {
    pub model: &'a ReconOperator,
    /// Fully sampled multi-coil k-space `k`; the mask is applied inside the objective.
    pub kspace: &'a MultiCoilKSpace,
    pub mask: &'a SamplingMask,
    pub maps: Option<&'a SensitivityMaps>,
    /// Fully sampled reference image `X`.
    pub target: &'a ReconImage,
    /// Objective region `S`.
    pub region: &'a RegionMask,
    /// Region on which SSIM/PSNR are reported; defaults to `region`.
    pub eval_region: Option<&'a RegionMask>,
}

impl AttackProblem<'_> {
    fn ctx(&self) -> ReconContext<'_> {
        ReconContext {
            mask: self.mask,
            maps: self.maps,
        }
    }

    fn eval_region(&self) -> &RegionMask {
        self.eval_region.unwrap_or(self.region)
    }

    fn validate(&self) -> Result<()> {
        let (h, w) = (self.target.height(), self.target.width());
        for (name, r) in [("region", self.region), ("eval_region", self.eval_region())] {
            if r.height() != h || r.width() != w {
                return Err(Error::shape(
                    "attack",
                    format!("{name} is {}x{}, target is {h}x{w}", r.height(), r.width()),
                ));
            }
        }
        if self.mask.width() != self.kspace.width() {
            return Err(Error::shape(
                "attack",
                "mask width differs from k-space width",
            ));
        }
        Ok(())
    }

    /// Records `‖S ⊙ (image − X)‖₂` on the tape.
    fn region_residual(&self, tape: &mut Tape, image: Var) -> Result<Var> {
        let shape = tape.value(image).shape().to_vec();
        if shape != [self.target.height(), self.target.width()] {
            return Err(Error::shape(
                "attack_objective",
                format!(
                    "reconstruction {shape:?} vs target {}x{}",
                    self.target.height(),
                    self.target.width()
                ),
            ));
        }
        let x = tape.constant(self.target.to_tensor());
        let d = tape.sub(image, x)?;
        let sq = tape.abs2(d)?;
        let s = tape.masked_sum(sq, region_weights(self.region))?;
        tape.sqrt(s)
    }

    fn metrics(&self, image: &ReconImage) -> Result<Metrics> {
        let cfg = MetricConfig::default();
        Ok(Metrics {
            ssim: region_ssim(self.target, image, self.eval_region(), &cfg)?,
            psnr: region_psnr(self.target, image, self.eval_region(), &cfg)?,
        })
    }
}

/// Region-restricted image quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ssim: f64,
    pub psnr: f64,
}

/// One evaluated angle of a rotation attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePoint {
    pub theta: f64,
    pub objective: f64,
    pub ssim: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    Noise(MultiCoilKSpace),
    Rotation { theta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub perturbation: Perturbation,
    /// Noise: objective after every step, starting from the initial iterate.
    /// Rotation: objective at every grid angle.
    pub objective_trace: Vec<f64>,
    pub baseline_objective: f64,
    pub attacked_objective: f64,
    pub baseline_metrics: Metrics,
    pub attacked_metrics: Metrics,
    /// Per-coil `‖z_i‖₂ / (η‖k_i‖₂)`; zero where the budget is zero. Empty for rotations.
    pub constraint_slack: Vec<f64>,
    /// Rotation only: the full per-angle curve.
    pub curve: Vec<AnglePoint>,
    /// Rotation: lowest SSIM over the grid. Noise: the attacked SSIM.
    pub worst_ssim: f64,
    pub baseline_image: ReconImage,
    pub attacked_image: ReconImage,
}

impl AttackReport {
    pub fn noise(&self) -> Option<&MultiCoilKSpace> {
        match &self.perturbation {
            Perturbation::Noise(z) => Some(z),
            Perturbation::Rotation { .. } => None,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self.perturbation {
            Perturbation::Rotation { theta } => Some(theta),
            Perturbation::Noise(_) => None,
        }
    }

    /// Voxelwise `|attacked − baseline|`.
    pub fn difference_image(&self) -> ReconImage {
        let px = self
            .attacked_image
            .pixels()
            .iter()
            .zip(self.baseline_image.pixels())
            .map(|(a, b)| (a - b).abs())
            .collect();
        ReconImage::new(
            self.baseline_image.height(),
            self.baseline_image.width(),
            px,
        )
        .expect("finite")
    }
}

/// Complex 0/1 column mask `[H,W]` as a tape constant.
pub(crate) fn mask_constant(tape: &mut Tape, mask: &SamplingMask, h: usize) -> Result<Var> {
    let w = mask.width();
    let cols = mask.columns();
    let m: Vec<C64> = (0..h * w)
        .map(|i| C64::new(if cols[i % w] { 1.0 } else { 0.0 }, 0.0))
        .collect();
    Ok(tape.constant(Tensor::complex(&[h, w], m)?))
}
