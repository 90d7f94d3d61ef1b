use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ReconContext, ReconKind, ReconOperator};
use crate::autodiff::{Tape, Tensor};
use crate::data::Phantom;
use crate::error::{Error, Result};
use crate::metrics::{ssim_on_tape, MetricConfig};
use crate::mri::SamplingMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    #[default]
    OneMinusSsim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub seed: u64,
    /// Acceleration of the masks drawn for every (epoch, sample).
    pub acceleration: u32,
    /// Reuse one mask with this seed everywhere instead of drawing fresh ones.
    #[serde(default)]
    pub fixed_mask_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 4,
            learning_rate: 2e-3,
            loss: LossKind::OneMinusSsim,
            seed: 0,
            acceleration: 4,
            fixed_mask_seed: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if self.acceleration == 0 {
            return Err(Error::invalid("acceleration must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ReconOperator,
    /// Mean training loss of every epoch.
    pub losses: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Seed of the mask drawn for `sample` in `epoch`.
pub(crate) fn mask_seed(seed: u64, epoch: usize, sample: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32) ^ (sample as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_loss(
    model: &ReconOperator,
    phantom: &Phantom,
    mask: &SamplingMask,
    loss: LossKind,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut tape = Tape::with_precision(model.precision());
    let params = model.bind(&mut tape, true);
    let k = phantom.kspace().apply_mask(mask)?;
    let kv = tape.constant(k.to_tensor());
    let ctx = ReconContext {
        mask,
        maps: Some(&phantom.maps),
    };
    let out = model.forward(&mut tape, &params, kv, ctx)?;
    let shape = tape.value(out).shape().to_vec();
    let target = phantom.image.center_crop(shape[0], shape[1])?;
    let range = target.max();
    let tv = tape.constant(target.to_tensor());
    let l = match loss {
        LossKind::L1 => {
            let d = tape.sub(out, tv)?;
            let a = tape.abs(d)?;
            tape.mean(a)?
        }
        LossKind::OneMinusSsim => {
            let s = ssim_on_tape(&mut tape, tv, out, range, &MetricConfig::default())?;
            let neg = tape.scale(s, -1.0)?;
            tape.shift(neg, 1.0)?
        }
    };
    let value = tape.value(l).item().expect("scalar loss");
    if !value.is_finite() {
        return Ok((value, BTreeMap::new()));
    }
    let mut grads = tape.backward(l)?;
    let g = params
        .vars()
        .iter()
        .map(|(name, &v)| {
            let g = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros_real(tape.value(v).shape()));
            (name.clone(), g)
        })
        .collect();
    Ok((value, g))
}

/// Fits a learned operator with Adam on fresh masks drawn per epoch and sample.
///
/// The sample order and every mask derive from `cfg.seed`, so two runs with
/// the same inputs produce bit-identical parameters.
pub fn train(
    model: &ReconOperator,
    dataset: &[Phantom],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    let mut model = model.clone();
    if model.kind() == ReconKind::ZeroFilled || cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            losses: Vec::new(),
        });
    }
    let cf = SamplingMask::default_center_fraction(cfg.acceleration);
    let mut m: BTreeMap<String, Vec<f64>> = model
        .params()
        .iter()
        .map(|(k, t)| (k.clone(), vec![0.0; t.numel()]))
        .collect();
    let mut v = m.clone();
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let p = &dataset[i];
                    let mask = SamplingMask::cartesian(
                        p.width(),
                        cfg.acceleration,
                        cf,
                        cfg.fixed_mask_seed
                            .unwrap_or_else(|| mask_seed(cfg.seed, epoch, i)),
                    )?;
                    sample_loss(&model, p, &mask, cfg.loss)
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut total: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (loss, grads) in results {
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                epoch_loss += loss;
                for (name, g) in grads {
                    let g = g.as_real().expect("parameters are real");
                    let acc = total.entry(name).or_insert_with(|| vec![0.0; g.len()]);
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b * scale);
                }
            }
            step += 1;
            let bc1 = 1.0 - BETA1.powi(step);
            let bc2 = 1.0 - BETA2.powi(step);
            let precision = model.precision();
            for (name, param) in model.params_mut().iter_mut() {
                let Some(g) = total.get(name) else { continue };
                let (mm, vv) = (
                    m.get_mut(name).expect("moment"),
                    v.get_mut(name).expect("moment"),
                );
                let mut data = param.as_real().expect("parameters are real").to_vec();
                for j in 0..data.len() {
                    mm[j] = BETA1 * mm[j] + (1.0 - BETA1) * g[j];
                    vv[j] = BETA2 * vv[j] + (1.0 - BETA2) * g[j] * g[j];
                    let mhat = mm[j] / bc1;
                    let vhat = vv[j] / bc2;
                    data[j] -= cfg.learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
                }
                precision.round_real(&mut data);
                if data.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Divergence { epoch });
                }
                *param = Tensor::real(param.shape(), data)?;
            }
        }
        losses.push(epoch_loss / dataset.len() as f64);
    }
    Ok(TrainOutcome { model, losses })
}
