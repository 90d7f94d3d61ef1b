use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mask_constant, AttackProblem, AttackReport, Perturbation};
use crate::autodiff::{Tape, C64};
use crate::error::{Error, Result};
use crate::mri::{MultiCoilKSpace, ReconImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseAttackConfig {
    /// Relative per-coil budget: `‖z_i‖₂ ≤ η‖k_i‖₂`.
    pub eta: f64,
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    pub track_best_iterate: bool,
    /// Extra runs from random feasible starting points; the best run wins.
    pub restarts: usize,
    /// Normalize each coil's gradient and scale by `step_size·η‖k_i‖₂`;
    /// when false the raw gradient times `step_size` is added.
    pub normalize_gradient: bool,
}

impl Default for NoiseAttackConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            steps: 10,
            step_size: 0.5,
            seed: 0,
            track_best_iterate: true,
            restarts: 0,
            normalize_gradient: true,
        }
    }
}

impl NoiseAttackConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta {} must be >= 0", self.eta)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step size {} must be > 0",
                self.step_size
            )));
        }
        Ok(())
    }
}

struct Eval {
    objective: f64,
    grad: Option<Vec<C64>>,
    image: ReconImage,
}

fn evaluate(p: &AttackProblem<'_>, z: &MultiCoilKSpace, with_grad: bool) -> Result<Eval> {
    let mut tape = Tape::with_precision(p.model.precision());
    let params = p.model.bind(&mut tape, false);
    let k = tape.constant(p.kspace.to_tensor());
    let zv = tape.leaf(z.to_tensor());
    let sum = tape.add(k, zv)?;
    let m = mask_constant(&mut tape, p.mask, p.kspace.height())?;
    let masked = tape.mul(sum, m)?;
    let image = p.model.forward(&mut tape, &params, masked, p.ctx())?;
    let j = p.region_residual(&mut tape, image)?;
    let objective = tape.value(j).item().expect("scalar objective");
    let grad = if with_grad {
        let mut g = tape.backward(j)?;
        Some(
            g.take(zv)
                .and_then(|t| t.into_complex())
                .unwrap_or_else(|| vec![C64::new(0.0, 0.0); z.data().len()]),
        )
    } else {
        None
    };
    Ok(Eval {
        objective,
        grad,
        image: ReconImage::from_tensor(tape.value(image))?,
    })
}

/// Objective `‖S ⊙ (f(M(k+z)) − X)‖₂` and its gradient with respect to `z`.
pub fn objective_and_gradient(
    p: &AttackProblem<'_>,
    z: &MultiCoilKSpace,
) -> Result<(f64, MultiCoilKSpace)> {
    p.validate()?;
    if !z.same_geometry(p.kspace) {
        return Err(Error::shape(
            "attack_objective",
            "perturbation geometry differs from k-space",
        ));
    }
    let e = evaluate(p, z, true)?;
    let g = MultiCoilKSpace::new(
        z.num_coils(),
        z.height(),
        z.width(),
        e.grad.expect("requested"),
    )?;
    Ok((e.objective, g))
}

/// Radially projects each coil of `z` onto the ball `‖z_i‖₂ ≤ budget_i`.
pub fn project_per_coil(z: &mut MultiCoilKSpace, budgets: &[f64]) {
    for (i, &b) in budgets.iter().enumerate() {
        let coil = z.coil_mut(i);
        let n = coil.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if b <= 0.0 {
            coil.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        } else if n > b {
            let s = b / n;
            coil.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n)
        .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn slack(z: &MultiCoilKSpace, budgets: &[f64]) -> Vec<f64> {
    z.coil_norms()
        .iter()
        .zip(budgets)
        .map(|(n, b)| if *b > 0.0 { n / b } else { 0.0 })
        .collect()
}

struct Run {
    z: MultiCoilKSpace,
    objective: f64,
    image: ReconImage,
    trace: Vec<f64>,
}

/// One PGD run from `z0`, whose evaluation (with gradient) is `first`.
fn run_pgd(
    p: &AttackProblem<'_>,
    cfg: &NoiseAttackConfig,
    budgets: &[f64],
    z0: MultiCoilKSpace,
    first: Eval,
    rng: &mut ChaCha8Rng,
) -> Result<Run> {
    let plane = p.kspace.plane_len();
    let mut z = z0;
    let mut grad = first.grad;
    let mut trace = vec![first.objective];
    let mut best = (z.clone(), first.objective, first.image);
    let mut last = (first.objective, best.2.clone());
    for step in 1..=cfg.steps {
        let g = grad.take().expect("gradient of the current iterate");
        if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite(format!("attack gradient at step {step}")));
        }
        for (i, &b) in budgets.iter().enumerate() {
            let gi = &g[i * plane..(i + 1) * plane];
            let zi = z.coil_mut(i);
            if cfg.normalize_gradient {
                let gn = gi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                let scale = cfg.step_size * b;
                if gn > 0.0 {
                    zi.iter_mut()
                        .zip(gi)
                        .for_each(|(a, d)| *a += d * (scale / gn));
                } else {
                    // flat objective, e.g. zero residual at the origin
                    let d = random_direction(rng, plane);
                    zi.iter_mut().zip(&d).for_each(|(a, d)| *a += d * scale);
                }
            } else {
                zi.iter_mut()
                    .zip(gi)
                    .for_each(|(a, d)| *a += d * cfg.step_size);
            }
        }
        project_per_coil(&mut z, budgets);
        let e = evaluate(p, &z, step < cfg.steps)?;
        if !e.objective.is_finite() {
            return Err(Error::NonFinite(format!("attack objective at step {step}")));
        }
        trace.push(e.objective);
        grad = e.grad;
        if e.objective > best.1 {
            best = (z.clone(), e.objective, e.image.clone());
        }
        last = (e.objective, e.image);
    }
    Ok(if cfg.track_best_iterate {
        Run {
            z: best.0,
            objective: best.1,
            image: best.2,
            trace,
        }
    } else {
        Run {
            z,
            objective: last.0,
            image: last.1,
            trace,
        }
    })
}

/// Projected gradient ascent on `z` maximizing the region residual of the
/// reconstruction of `M(k+z)` against `X`, under per-coil budgets `η‖k_i‖₂`.
///
/// `candidates` are warm starts, e.g. solutions found at a smaller budget.
/// Each is projected onto the current budget and evaluated; the best of them
/// and `z = 0` seeds the first run and counts as a visited iterate.
pub fn pgd_noise_attack(
    p: &AttackProblem<'_>,
    cfg: &NoiseAttackConfig,
    candidates: &[MultiCoilKSpace],
) -> Result<AttackReport> {
    cfg.validate()?;
    p.validate()?;
    if candidates.iter().any(|c| !c.same_geometry(p.kspace)) {
        return Err(Error::shape(
            "pgd_noise_attack",
            "candidate geometry differs from k-space",
        ));
    }
    let k = p.kspace;
    let budgets: Vec<f64> = k.coil_norms().iter().map(|n| cfg.eta * n).collect();
    let zero = MultiCoilKSpace::zeros(k.num_coils(), k.height(), k.width());
    let active = budgets.iter().any(|&b| b > 0.0);
    let base = evaluate(p, &zero, active)?;
    let baseline_metrics = p.metrics(&base.image)?;

    if !active {
        return Ok(AttackReport {
            perturbation: Perturbation::Noise(zero),
            objective_trace: vec![base.objective; cfg.steps + 1],
            baseline_objective: base.objective,
            attacked_objective: base.objective,
            baseline_metrics,
            attacked_metrics: baseline_metrics,
            constraint_slack: vec![0.0; budgets.len()],
            curve: Vec::new(),
            worst_ssim: baseline_metrics.ssim,
            baseline_image: base.image.clone(),
            attacked_image: base.image,
        });
    }

    let baseline_objective = base.objective;
    let baseline_image = base.image.clone();
    let mut start = (zero, base);
    for c in candidates {
        let mut c = c.clone();
        project_per_coil(&mut c, &budgets);
        let e = evaluate(p, &c, true)?;
        if e.objective > start.1.objective {
            start = (c, e);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = run_pgd(p, cfg, &budgets, start.0, start.1, &mut rng)?;
    for _ in 0..cfg.restarts {
        let mut z0 = MultiCoilKSpace::zeros(k.num_coils(), k.height(), k.width());
        for (i, &b) in budgets.iter().enumerate() {
            let radius: f64 = b * rand::Rng::random::<f64>(&mut rng);
            let d = random_direction(&mut rng, k.plane_len());
            z0.coil_mut(i)
                .iter_mut()
                .zip(&d)
                .for_each(|(a, d)| *a = d * radius);
        }
        let e = evaluate(p, &z0, true)?;
        let run = run_pgd(p, cfg, &budgets, z0, e, &mut rng)?;
        if run.objective > best.objective {
            best = run;
        }
    }

    let attacked_metrics = p.metrics(&best.image)?;
    Ok(AttackReport {
        constraint_slack: slack(&best.z, &budgets),
        perturbation: Perturbation::Noise(best.z),
        objective_trace: best.trace,
        baseline_objective,
        attacked_objective: best.objective,
        baseline_metrics,
        attacked_metrics,
        curve: Vec::new(),
        worst_ssim: attacked_metrics.ssim,
        baseline_image,
        attacked_image: best.image,
    })
}
