use serde::{Deserialize, Serialize};

use super::{AnglePoint, AttackProblem, AttackReport, Perturbation};
use crate::autodiff::fft::{fft2c, ifft2c};
use crate::autodiff::{ResampleGrid, Tape};
use crate::error::{Error, Result};
use crate::mri::{MultiCoilKSpace, ReconImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationAttackConfig {
    /// Largest absolute angle in degrees.
    pub theta_max: f64,
    pub grid_step: f64,
}

impl Default for RotationAttackConfig {
    fn default() -> Self {
        Self {
            theta_max: 5.0,
            grid_step: 0.1,
        }
    }
}

fn snap12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Evenly spaced angles `i·step` in `[−θmax, θmax]`, always including `0` and `±θmax`, ascending.
pub fn rotation_grid(cfg: &RotationAttackConfig) -> Result<Vec<f64>> {
    if !(cfg.theta_max >= 0.0 && cfg.theta_max <= 180.0) {
        return Err(Error::invalid(format!(
            "theta_max {} outside [0, 180]",
            cfg.theta_max
        )));
    }
    if !(cfg.grid_step > 0.0 && cfg.grid_step.is_finite()) {
        return Err(Error::invalid(format!(
            "grid step {} must be > 0",
            cfg.grid_step
        )));
    }
    let n = (cfg.theta_max / cfg.grid_step + 1e-9).floor() as i64;
    let mut grid: Vec<f64> = (-n..=n).map(|i| snap12(i as f64 * cfg.grid_step)).collect();
    grid.push(-cfg.theta_max);
    grid.push(cfg.theta_max);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    // clip the rounding overshoot of the last multiple
    grid.retain(|t| t.abs() <= cfg.theta_max + 1e-9);
    Ok(grid)
}

/// Rotates every coil in image space: inverse FFT, bilinear rotation about the
/// center with zero fill, forward FFT.
pub fn rotate_kspace(k: &MultiCoilKSpace, theta_deg: f64) -> Result<MultiCoilKSpace> {
    if !(theta_deg.abs() <= 180.0) {
        return Err(Error::invalid(format!(
            "rotation angle {theta_deg} outside [-180, 180]"
        )));
    }
    if theta_deg == 0.0 {
        return Ok(k.clone());
    }
    let (h, w) = (k.height(), k.width());
    let grid = ResampleGrid::rotation(h, w, theta_deg);
    let mut out = Vec::with_capacity(k.data().len());
    for i in 0..k.num_coils() {
        let img = ifft2c(k.coil(i), h, w);
        let rot = grid.apply_complex(&img);
        out.extend(fft2c(&rot, h, w));
    }
    MultiCoilKSpace::new(k.num_coils(), h, w, out)
}

pub fn rotate_image(img: &ReconImage, theta_deg: f64) -> Result<ReconImage> {
    if theta_deg == 0.0 {
        return Ok(img.clone());
    }
    let grid = ResampleGrid::rotation(img.height(), img.width(), theta_deg);
    ReconImage::new(img.height(), img.width(), grid.apply_real(img.pixels()))
}

struct AngleEval {
    objective: f64,
    image: ReconImage,
}

fn evaluate(p: &AttackProblem<'_>, theta: f64) -> Result<AngleEval> {
    let k = rotate_kspace(p.kspace, theta)?.apply_mask(p.mask)?;
    let recon = p.model.reconstruct(&k, p.ctx())?;
    // back into the frame of the reference
    let image = rotate_image(&recon, -theta)?;
    let mut tape = Tape::new();
    let x = tape.constant(image.to_tensor());
    let j = p.region_residual(&mut tape, x)?;
    Ok(AngleEval {
        objective: tape.value(j).item().expect("scalar objective"),
        image,
    })
}

/// Grid search for the in-plane rotation that maximizes the region residual.
///
/// Ties in the objective go to the smallest `|θ|`, then to the negative angle.
/// `worst_ssim` is the lowest region SSIM anywhere on the grid, so it never
/// exceeds the SSIM at `θ = 0`.
pub fn rotation_attack(p: &AttackProblem<'_>, cfg: &RotationAttackConfig) -> Result<AttackReport> {
    p.validate()?;
    let grid = rotation_grid(cfg)?;
    let mut curve = Vec::with_capacity(grid.len());
    let mut images = Vec::with_capacity(grid.len());
    for &theta in &grid {
        let e = evaluate(p, theta)?;
        if !e.objective.is_finite() {
            return Err(Error::NonFinite(format!(
                "rotation objective at {theta} degrees"
            )));
        }
        let m = p.metrics(&e.image)?;
        curve.push(AnglePoint {
            theta,
            objective: e.objective,
            ssim: m.ssim,
            psnr: m.psnr,
        });
        images.push(e.image);
    }
    let zero = grid
        .iter()
        .position(|&t| t == 0.0)
        .expect("grid contains 0");
    let mut best = zero;
    for (i, pt) in curve.iter().enumerate() {
        let b = &curve[best];
        let better = pt.objective > b.objective
            || (pt.objective == b.objective
                && (pt.theta.abs() < b.theta.abs()
                    || (pt.theta.abs() == b.theta.abs() && pt.theta < b.theta)));
        if better {
            best = i;
        }
    }
    let worst_ssim = curve.iter().map(|c| c.ssim).fold(f64::INFINITY, f64::min);
    let base = curve[zero];
    let att = curve[best];
    let metrics = |pt: &AnglePoint| super::Metrics {
        ssim: pt.ssim,
        psnr: pt.psnr,
    };
    Ok(AttackReport {
        perturbation: Perturbation::Rotation { theta: att.theta },
        objective_trace: curve.iter().map(|c| c.objective).collect(),
        baseline_objective: base.objective,
        attacked_objective: att.objective,
        baseline_metrics: metrics(&base),
        attacked_metrics: metrics(&att),
        constraint_slack: Vec::new(),
        worst_ssim,
        baseline_image: images[zero].clone(),
        attacked_image: images.swap_remove(best),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::RegionMask;
    use crate::data::generate_phantom;
    use crate::mri::SamplingMask;
    use crate::recon::ReconOperator;

    #[test]
    fn grid_construction() {
        let g = rotation_grid(&RotationAttackConfig {
            theta_max: 0.3,
            grid_step: 0.1,
        })
        .unwrap();
        assert_eq!(g, vec![-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3]);
        let g = rotation_grid(&RotationAttackConfig {
            theta_max: 0.25,
            grid_step: 0.1,
        })
        .unwrap();
        assert_eq!(g, vec![-0.25, -0.2, -0.1, 0.0, 0.1, 0.2, 0.25]);
        let g = rotation_grid(&RotationAttackConfig {
            theta_max: 5.0,
            grid_step: 0.1,
        })
        .unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(
            rotation_grid(&RotationAttackConfig {
                theta_max: 0.0,
                grid_step: 0.1
            })
            .unwrap(),
            vec![0.0]
        );
        assert!(rotation_grid(&RotationAttackConfig {
            theta_max: 1.0,
            grid_step: 0.0
        })
        .is_err());
    }

    fn smooth_kspace() -> MultiCoilKSpace {
        let (h, w) = (40, 40);
        let px = (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as f64 - 19.5, (i % w) as f64 - 19.5);
                (-(r * r + c * c) / 60.0).exp()
            })
            .collect();
        let img = ReconImage::new(h, w, px).unwrap();
        crate::mri::synthesize_kspace(&img, &crate::mri::SensitivityMaps::simulate(2, h, w, 0))
            .unwrap()
    }

    #[test]
    fn rotation_examples() {
        let k = smooth_kspace();
        let same = rotate_kspace(&k, 0.0).unwrap();
        assert_eq!(same, k);

        let quarter = rotate_kspace(&k, 90.0).unwrap();
        let (a, b) = (k.coil_images(), quarter.coil_images());
        // a 90° turn of the square grid permutes coil-image pixels
        let mut va: Vec<f64> = a[0].iter().map(|v| v.norm()).collect();
        let mut vb: Vec<f64> = b[0].iter().map(|v| v.norm()).collect();
        va.sort_by(f64::total_cmp);
        vb.sort_by(f64::total_cmp);
        assert!(va.iter().zip(&vb).all(|(x, y)| (x - y).abs() < 1e-12));

        let there = rotate_kspace(&k, 3.7).unwrap();
        let back = rotate_kspace(&there, -3.7).unwrap();
        let (orig, rec) = (k.rss_image(), back.rss_image());
        let (mut num, mut den) = (0.0, 0.0);
        for r in 2..38 {
            for c in 2..38 {
                num += (orig.get(r, c) - rec.get(r, c)).powi(2);
                den += orig.get(r, c).powi(2);
            }
        }
        assert!((num / den).sqrt() < 2e-2);
        assert!(rotate_kspace(&k, 200.0).is_err());
    }

    #[test]
    fn attack_dominance_and_degenerate_grid() {
        let p = generate_phantom(32, 32, 2, 3).unwrap();
        let k = p.kspace();
        let mask = SamplingMask::cartesian(32, 4, 0.08, 0).unwrap();
        let region = p.annotation_region();
        let model = ReconOperator::zero_filled();
        let problem = AttackProblem {
            model: &model,
            kspace: &k,
            mask: &mask,
            maps: Some(&p.maps),
            target: &p.image,
            region: &region,
            eval_region: None,
        };
        let r = rotation_attack(
            &problem,
            &RotationAttackConfig {
                theta_max: 0.0,
                grid_step: 0.1,
            },
        )
        .unwrap();
        assert_eq!(r.theta(), Some(0.0));
        assert_eq!(r.attacked_objective, r.baseline_objective);

        let r = rotation_attack(
            &problem,
            &RotationAttackConfig {
                theta_max: 2.0,
                grid_step: 0.5,
            },
        )
        .unwrap();
        assert_eq!(r.curve.len(), 9);
        assert!(r.attacked_objective >= r.baseline_objective);
        assert!(r.worst_ssim <= r.baseline_metrics.ssim);
        let full = RegionMask::full(32, 32);
        let problem = AttackProblem {
            region: &full,
            ..problem
        };
        let r2 = rotation_attack(
            &problem,
            &RotationAttackConfig {
                theta_max: 2.0,
                grid_step: 0.5,
            },
        )
        .unwrap();
        assert!(r2.attacked_objective > r.attacked_objective);
    }
}
