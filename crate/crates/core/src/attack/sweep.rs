use serde::{Deserialize, Serialize};

use super::{
    pgd_noise_attack, rotation_attack, AttackProblem, AttackReport, NoiseAttackConfig, RegionMask,
    RotationAttackConfig,
};
use crate::data::Phantom;
use crate::error::{Error, Result};
use crate::mri::{MultiCoilKSpace, SamplingMask};
use crate::recon::ReconOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Noise,
    Rotation,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Noise => "noise",
            AttackKind::Rotation => "rotation",
        }
    }
}

/// Which region the attack objective covers. Metrics are always reported on the annotation box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionMode {
    Annotated,
    Full,
}

impl RegionMode {
    pub fn name(self) -> &'static str {
        match self {
            RegionMode::Annotated => "annotated",
            RegionMode::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: AttackKind,
    /// η values for noise attacks, `θ_max` in degrees for rotation attacks.
    pub params: Vec<f64>,
    pub smode: RegionMode,
    pub acceleration: u32,
    pub seeds: Vec<u64>,
    /// Steps, step size, restarts etc.; `eta` and `seed` are overridden per job.
    pub noise: NoiseAttackConfig,
    pub grid_step: f64,
    /// Worker threads; 0 uses every logical processor.
    pub workers: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::Noise,
            params: vec![0.0, 0.005, 0.01, 0.015, 0.02, 0.025],
            smode: RegionMode::Annotated,
            acceleration: 4,
            seeds: vec![0],
            noise: NoiseAttackConfig::default(),
            grid_step: 0.1,
            workers: 0,
        }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    #[serde(rename = "R")]
    pub r: u32,
    pub attack: String,
    pub smode: String,
    pub param: f64,
    pub seed: u64,
    pub sample: usize,
    pub ssim_base: f64,
    pub ssim_adv: f64,
    pub psnr_base: f64,
    pub psnr_adv: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SweepJob {
    pub row: SweepRow,
    pub report: AttackReport,
}

fn run_group(
    model: &ReconOperator,
    model_name: &str,
    sample: usize,
    phantom: &Phantom,
    seed: u64,
    spec: &SweepSpec,
    params: &[f64],
) -> Result<Vec<SweepJob>> {
    let (h, w) = (phantom.height(), phantom.width());
    let k = phantom.kspace();
    let cf = SamplingMask::default_center_fraction(spec.acceleration);
    let mask = SamplingMask::cartesian(w, spec.acceleration, cf, phantom.seed)?;
    let annotation = phantom.annotation_region();
    let full = RegionMask::full(h, w);
    let region = match spec.smode {
        RegionMode::Annotated => &annotation,
        RegionMode::Full => &full,
    };
    let problem = AttackProblem {
        model,
        kspace: &k,
        mask: &mask,
        maps: Some(&phantom.maps),
        target: &phantom.image,
        region,
        eval_region: Some(&annotation),
    };
    let mut out = Vec::with_capacity(params.len());
    let mut warm: Vec<MultiCoilKSpace> = Vec::new();
    for &param in params {
        let report = match spec.kind {
            AttackKind::Noise => {
                let cfg = NoiseAttackConfig {
                    eta: param,
                    seed,
                    ..spec.noise.clone()
                };
                let r = pgd_noise_attack(&problem, &cfg, &warm)?;
                warm = vec![r.noise().expect("noise report").clone()];
                r
            }
            AttackKind::Rotation => rotation_attack(
                &problem,
                &RotationAttackConfig {
                    theta_max: param,
                    grid_step: spec.grid_step,
                },
            )?,
        };
        let (ssim_adv, psnr_adv) = match spec.kind {
            AttackKind::Noise => (report.attacked_metrics.ssim, report.attacked_metrics.psnr),
            AttackKind::Rotation => (
                report.worst_ssim,
                report
                    .curve
                    .iter()
                    .map(|c| c.psnr)
                    .fold(f64::INFINITY, f64::min),
            ),
        };
        out.push(SweepJob {
            row: SweepRow {
                model: model_name.to_string(),
                r: spec.acceleration,
                attack: spec.kind.name().into(),
                smode: spec.smode.name().into(),
                param,
                seed,
                sample,
                ssim_base: report.baseline_metrics.ssim,
                ssim_adv,
                psnr_base: report.baseline_metrics.psnr,
                psnr_adv,
                objective: report.attacked_objective,
            },
            report,
        });
    }
    Ok(out)
}

/// Runs the attack for every (sample, seed, parameter) on a bounded worker pool.
///
/// Parameters are processed in ascending order per (sample, seed) so that each
/// noise attack can start from the solution found at the previous budget.
/// Rows come back ordered by sample, then seed, then parameter.
pub fn sweep(
    model: &ReconOperator,
    model_name: &str,
    dataset: &[Phantom],
    spec: &SweepSpec,
) -> Result<Vec<SweepJob>> {
    if dataset.is_empty() {
        return Err(Error::invalid("sweep needs at least one sample"));
    }
    if spec.params.is_empty() || spec.seeds.is_empty() {
        return Err(Error::invalid(
            "sweep needs at least one parameter and one seed",
        ));
    }
    if spec.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("sweep parameters must be finite"));
    }
    let mut params = spec.params.clone();
    params.sort_by(f64::total_cmp);
    params.dedup();
    let groups: Vec<(usize, u64)> = (0..dataset.len())
        .flat_map(|s| spec.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let results: Vec<Result<Vec<SweepJob>>> = pool.install(|| {
        use rayon::prelude::*;
        groups
            .par_iter()
            .map(|&(s, seed)| run_group(model, model_name, s, &dataset[s], seed, spec, &params))
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}
