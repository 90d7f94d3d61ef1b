//! Differentiable reconstruction operators from masked multi-coil k-space to
//! a magnitude image, and a small training loop to fit the learned ones.

mod checkpoint;
mod train;
mod unet;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Precision, Tape, Tensor, Var, C64};
use crate::error::{Error, Result};
use crate::mri::{MultiCoilKSpace, ReconImage, SamplingMask, SensitivityMaps};
use unet::UNetShape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use train::{train, LossKind, TrainConfig, TrainOutcome};

/// Regularizer added to the per-image standard deviation before dividing by it.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    ZeroFilled,
    Unet,
    Varnet,
}

impl ReconKind {
    pub fn name(self) -> &'static str {
        match self {
            ReconKind::ZeroFilled => "zero_filled",
            ReconKind::Unet => "unet",
            ReconKind::Varnet => "varnet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub top_channels: usize,
    pub depth: usize,
    /// Output center crop `[rows, cols]`; `None` keeps the full field of view.
    pub crop: Option<[usize; 2]>,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            top_channels: 8,
            depth: 3,
            crop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarNetConfig {
    pub cascades: usize,
    pub unet_top_channels: usize,
    pub unet_depth: usize,
    pub dc_weight_init: f64,
    pub crop: Option<[usize; 2]>,
}

impl Default for VarNetConfig {
    fn default() -> Self {
        Self {
            cascades: 4,
            unet_top_channels: 6,
            unet_depth: 2,
            dc_weight_init: 1.0,
            crop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    ZeroFilled { crop: Option<[usize; 2]> },
    Unet(UNetConfig),
    Varnet(VarNetConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> ReconKind {
        match self {
            ModelSpec::ZeroFilled { .. } => ReconKind::ZeroFilled,
            ModelSpec::Unet(_) => ReconKind::Unet,
            ModelSpec::Varnet(_) => ReconKind::Varnet,
        }
    }

    fn crop(&self) -> Option<[usize; 2]> {
        match self {
            ModelSpec::ZeroFilled { crop } => *crop,
            ModelSpec::Unet(c) => c.crop,
            ModelSpec::Varnet(c) => c.crop,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::ZeroFilled { .. } => Ok(()),
            ModelSpec::Unet(c) if c.top_channels == 0 || c.depth == 0 => Err(Error::invalid(
                "unet needs top_channels >= 1 and depth >= 1",
            )),
            ModelSpec::Varnet(c) if c.unet_top_channels == 0 || c.unet_depth == 0 => Err(
                Error::invalid("varnet refinement needs top_channels >= 1 and depth >= 1"),
            ),
            ModelSpec::Varnet(c) if !c.dc_weight_init.is_finite() => {
                Err(Error::invalid("dc_weight_init must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// Side information a reconstruction may use besides the k-space.
#[derive(Debug, Clone, Copy)]
pub struct ReconContext<'a> {
    pub mask: &'a SamplingMask,
    pub maps: Option<&'a SensitivityMaps>,
}

/// Parameters of an operator placed on a tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }
}

/// Reconstruction operator `f`: zero-filled, image-domain UNet or unrolled variational network.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconOperator {
    spec: ModelSpec,
    params: BTreeMap<String, Tensor>,
    precision: Precision,
}

fn unet_shape(c: &UNetConfig) -> UNetShape {
    UNetShape {
        in_ch: 1,
        out_ch: 1,
        top: c.top_channels,
        depth: c.depth,
    }
}

fn refine_shape(c: &VarNetConfig) -> UNetShape {
    UNetShape {
        in_ch: 2,
        out_ch: 2,
        top: c.unet_top_channels,
        depth: c.unet_depth,
    }
}

fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

impl ReconOperator {
    pub fn zero_filled() -> Self {
        Self {
            spec: ModelSpec::ZeroFilled { crop: None },
            params: BTreeMap::new(),
            precision: Precision::F64,
        }
    }

    /// Freshly initialized operator; learned final layers start at zero so
    /// both networks initially reproduce the zero-filled reconstruction.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        match &spec {
            ModelSpec::ZeroFilled { .. } => {}
            ModelSpec::Unet(c) => unet_shape(c).init("", &mut rng, &mut params),
            ModelSpec::Varnet(c) => {
                for t in 0..c.cascades {
                    refine_shape(c).init(&format!("cascade{t}."), &mut rng, &mut params);
                    params.insert(
                        format!("cascade{t}.dc_weight"),
                        Tensor::real(&[1], vec![c.dc_weight_init])?,
                    );
                }
            }
        }
        Ok(Self {
            spec,
            params,
            precision: Precision::F64,
        })
    }

    /// Rebuilds an operator from stored parameters, checking names and shapes.
    pub fn from_parts(
        spec: ModelSpec,
        params: BTreeMap<String, Tensor>,
        precision: Precision,
    ) -> Result<Self> {
        spec.validate()?;
        let expected = Self::init(spec.clone(), 0)?;
        for (name, t) in &expected.params {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() && !p.is_complex() => {}
                Some(p) => {
                    return Err(Error::shape(
                        "recon_parameters",
                        format!("{name}: expected {:?}, got {:?}", t.shape(), p.shape()),
                    ))
                }
                None => return Err(Error::invalid(format!("missing parameter {name}"))),
            }
        }
        if let Some(extra) = params.keys().find(|k| !expected.params.contains_key(*k)) {
            return Err(Error::invalid(format!("unexpected parameter {extra}")));
        }
        Ok(Self {
            spec,
            params,
            precision,
        })
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn kind(&self) -> ReconKind {
        self.spec.kind()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Places the parameters on `tape`, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }

    /// Records `f(k)` for a complex `[N,H,W]` k-space node whose mask has already been applied.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        k: Var,
        ctx: ReconContext<'_>,
    ) -> Result<Var> {
        let shape = tape.value(k).shape().to_vec();
        let [_, h, w] = shape[..] else {
            return Err(Error::shape(
                "recon_forward",
                format!("expected [N,H,W] k-space, got {shape:?}"),
            ));
        };
        if !tape.value(k).is_complex() {
            return Err(Error::DType {
                op: "recon_forward",
                expected: "complex",
            });
        }
        if ctx.mask.width() != w {
            return Err(Error::shape(
                "recon_forward",
                format!("mask width {} vs k-space width {w}", ctx.mask.width()),
            ));
        }
        let img = match &self.spec {
            ModelSpec::ZeroFilled { .. } => zero_filled_on_tape(tape, k)?,
            ModelSpec::Unet(c) => {
                let zf = zero_filled_on_tape(tape, k)?;
                self.unet_forward(tape, params, c, zf, h, w)?
            }
            ModelSpec::Varnet(c) => {
                let maps = ctx.maps.ok_or_else(|| {
                    Error::invalid("varnet reconstruction requires sensitivity maps")
                })?;
                let n = shape[0];
                if maps.num_coils() != n || maps.height() != h || maps.width() != w {
                    return Err(Error::shape(
                        "varnet_forward",
                        format!(
                            "maps {}x{}x{} vs k-space {n}x{h}x{w}",
                            maps.num_coils(),
                            maps.height(),
                            maps.width()
                        ),
                    ));
                }
                let k = self.varnet_kspace(tape, params, c, k, ctx.mask, maps)?;
                zero_filled_on_tape(tape, k)?
            }
        };
        match self.spec.crop() {
            Some([ch, cw]) if ch > h || cw > w => Err(Error::invalid(format!(
                "crop {ch}x{cw} exceeds image {h}x{w}"
            ))),
            Some([ch, cw]) => tape.window(img, ch, cw),
            None => Ok(img),
        }
    }

    fn unet_forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        c: &UNetConfig,
        zf: Var,
        h: usize,
        w: usize,
    ) -> Result<Var> {
        let net = unet_shape(c);
        let (x, mean, std) = normalize(tape, zf)?;
        let (ph, pw) = (round_up(h, net.multiple()), round_up(w, net.multiple()));
        let x = tape.reshape(x, &[1, h, w])?;
        let xp = tape.window(x, ph, pw)?;
        let res = net.apply(tape, "", &params.vars, xp)?;
        let y = tape.add(xp, res)?;
        let y = tape.window(y, h, w)?;
        let y = tape.reshape(y, &[h, w])?;
        let y = tape.mul(y, std)?;
        let y = tape.add(y, mean)?;
        tape.abs(y)
    }

    /// Final k-space estimate after all cascades.
    fn varnet_kspace(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        c: &VarNetConfig,
        k0: Var,
        mask: &SamplingMask,
        maps: &SensitivityMaps,
    ) -> Result<Var> {
        let (h, w) = (maps.height(), maps.width());
        let net = refine_shape(c);
        let (ph, pw) = (round_up(h, net.multiple()), round_up(w, net.multiple()));
        let cols = mask.columns();
        let m: Vec<C64> = (0..h * w)
            .map(|i| C64::new(if cols[i % w] { 1.0 } else { 0.0 }, 0.0))
            .collect();
        let mc: Vec<C64> = m.iter().map(|v| C64::new(1.0, 0.0) - v).collect();
        let m = tape.constant(Tensor::complex(&[h, w], m)?);
        let mc = tape.constant(Tensor::complex(&[h, w], mc)?);
        let s = tape.constant(maps.to_tensor());
        let s_conj = tape.conj(s)?;

        let mut k = k0;
        for t in 0..c.cascades {
            // Soft data consistency, arranged so that a unit weight reproduces
            // the measured samples bit for bit.
            let lam = tape.to_complex(params.vars[&format!("cascade{t}.dc_weight")])?;
            let one_minus = {
                let neg = tape.scale(params.vars[&format!("cascade{t}.dc_weight")], -1.0)?;
                let om = tape.shift(neg, 1.0)?;
                tape.to_complex(om)?
            };
            let a = tape.mul(lam, k0)?;
            let b = tape.mul(one_minus, k)?;
            let ab = tape.add(a, b)?;
            let sampled = tape.mul(m, ab)?;
            let unsampled = tape.mul(mc, k)?;
            let k_dc = tape.add(sampled, unsampled)?;

            // Refinement: reduce to one image, run the network, expand back.
            let coils = tape.ifft2c(k)?;
            let weighted = tape.mul(s_conj, coils)?;
            let combined = tape.sum_leading(weighted)?;
            let re = tape.real_part(combined)?;
            let im = tape.imag_part(combined)?;
            let re = tape.reshape(re, &[1, h, w])?;
            let im = tape.reshape(im, &[1, h, w])?;
            let x = tape.concat(&[re, im])?;
            let (xn, _mean, std) = normalize(tape, x)?;
            let xp = tape.window(xn, ph, pw)?;
            let y = net.apply(tape, &format!("cascade{t}."), &params.vars, xp)?;
            let y = tape.window(y, h, w)?;
            let y = tape.mul(y, std)?;
            let yr = tape.slice_leading(y, 0, 1)?;
            let yi = tape.slice_leading(y, 1, 1)?;
            let yr = tape.reshape(yr, &[h, w])?;
            let yi = tape.reshape(yi, &[h, w])?;
            let img = tape.complexify(yr, yi)?;
            let expanded = tape.mul(s, img)?;
            let refined = tape.fft2c(expanded)?;
            k = tape.sub(k_dc, refined)?;
        }
        Ok(k)
    }

    /// Evaluates `f` on already-masked k-space without recording gradients for the caller.
    pub fn reconstruct(
        &self,
        k_masked: &MultiCoilKSpace,
        ctx: ReconContext<'_>,
    ) -> Result<ReconImage> {
        let mut tape = Tape::with_precision(self.precision);
        let params = self.bind(&mut tape, false);
        let k = tape.constant(k_masked.to_tensor());
        let out = self.forward(&mut tape, &params, k, ctx)?;
        ReconImage::from_tensor(tape.value(out))
    }
}

/// Zero-filled reconstruction of a `[N,H,W]` k-space node: coil-wise inverse FFT then RSS.
pub fn zero_filled_on_tape(tape: &mut Tape, k: Var) -> Result<Var> {
    let coils = tape.ifft2c(k)?;
    tape.rss(coils)
}

/// Zero-filled reconstruction of masked k-space.
pub fn zero_filled(k_masked: &MultiCoilKSpace) -> ReconImage {
    k_masked.rss_image()
}

/// `((x - μ)/σ, μ, σ)` with scalar statistics over all elements, all on the tape.
fn normalize(tape: &mut Tape, x: Var) -> Result<(Var, Var, Var)> {
    let mean = tape.mean(x)?;
    let centered = tape.sub(x, mean)?;
    let sq = tape.abs2(centered)?;
    let var = tape.mean(sq)?;
    let std = tape.sqrt(var)?;
    let std = tape.shift(std, NORM_EPS)?;
    let xn = tape.div(centered, std)?;
    Ok((xn, mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_phantom;
    use crate::metrics::{ssim, MetricConfig};

    fn setup(accel: u32) -> (crate::data::Phantom, MultiCoilKSpace, SamplingMask) {
        let p = generate_phantom(32, 32, 3, 5).unwrap();
        let mask = if accel == 1 {
            SamplingMask::full(32)
        } else {
            SamplingMask::cartesian(32, accel, SamplingMask::default_center_fraction(accel), 1)
                .unwrap()
        };
        let k = p.kspace().apply_mask(&mask).unwrap();
        (p, k, mask)
    }

    fn ctx<'a>(mask: &'a SamplingMask, p: &'a crate::data::Phantom) -> ReconContext<'a> {
        ReconContext {
            mask,
            maps: Some(&p.maps),
        }
    }

    fn rel_err(a: &ReconImage, b: &ReconImage) -> f64 {
        let num: f64 = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        let den: f64 = b.pixels().iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zero_filled_examples() {
        let (p, k, mask) = setup(1);
        let zf = ReconOperator::zero_filled()
            .reconstruct(&k, ctx(&mask, &p))
            .unwrap();
        assert!(rel_err(&zf, &p.image) < 1e-8);

        let (p, k, mask) = setup(4);
        let zf = ReconOperator::zero_filled()
            .reconstruct(&k, ctx(&mask, &p))
            .unwrap();
        assert!(ssim(&p.image, &zf, &MetricConfig::default()).unwrap() < 1.0);
        assert_eq!(zf, zero_filled(&k));

        let zero = MultiCoilKSpace::zeros(3, 32, 32);
        assert!(zero_filled(&zero).pixels().iter().all(|&v| v == 0.0));

        let scaled =
            MultiCoilKSpace::new(3, 32, 32, k.data().iter().map(|v| v * 2.5).collect()).unwrap();
        let a = zero_filled(&scaled);
        assert!(a
            .pixels()
            .iter()
            .zip(zf.pixels())
            .all(|(x, y)| (x - 2.5 * y).abs() < 1e-12));
    }

    #[test]
    fn zero_filled_coil_pipeline_is_linear() {
        let (_, k, _) = setup(4);
        let (_, k2, _) = {
            let p = generate_phantom(32, 32, 3, 9).unwrap();
            let m = SamplingMask::cartesian(32, 4, 0.08, 1).unwrap();
            (0, p.kspace().apply_mask(&m).unwrap(), 0)
        };
        let sum = k.add(&k2).unwrap();
        let (a, b, c) = (k.coil_images(), k2.coil_images(), sum.coil_images());
        for i in 0..3 {
            for j in 0..32 * 32 {
                assert!((a[i][j] + b[i][j] - c[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn untrained_unet_is_identity_on_zero_filled() {
        let (p, k, mask) = setup(4);
        let zf = zero_filled(&k);
        for depth in [1, 3] {
            let cfg = UNetConfig {
                top_channels: 4,
                depth,
                crop: None,
            };
            let op = ReconOperator::init(ModelSpec::Unet(cfg), 3).unwrap();
            let out = op.reconstruct(&k, ctx(&mask, &p)).unwrap();
            assert!(rel_err(&out, &zf) < 1e-12, "depth {depth}");
            assert_eq!(out, op.reconstruct(&k, ctx(&mask, &p)).unwrap());
        }
    }

    #[test]
    fn varnet_zero_cascades_is_zero_filled() {
        let (p, k, mask) = setup(4);
        let cfg = VarNetConfig {
            cascades: 0,
            ..Default::default()
        };
        let op = ReconOperator::init(ModelSpec::Varnet(cfg), 0).unwrap();
        assert_eq!(op.reconstruct(&k, ctx(&mask, &p)).unwrap(), zero_filled(&k));
        let no_maps = ReconContext {
            mask: &mask,
            maps: None,
        };
        assert!(op.reconstruct(&k, no_maps).is_err());
    }

    #[test]
    fn varnet_hard_data_consistency_is_exact() {
        let (p, k0, mask) = setup(4);
        for cascades in 1..=3 {
            let cfg = VarNetConfig {
                cascades,
                unet_top_channels: 2,
                unet_depth: 1,
                ..Default::default()
            };
            let op = ReconOperator::init(ModelSpec::Varnet(cfg.clone()), 0).unwrap();
            let mut tape = Tape::new();
            let params = op.bind(&mut tape, false);
            let measured = tape.constant(k0.to_tensor());
            let out = op
                .varnet_kspace(&mut tape, &params, &cfg, measured, &mask, &p.maps)
                .unwrap();
            let est = tape.value(out).as_complex().unwrap();
            for (i, v) in est.iter().enumerate() {
                if mask.columns()[i % 32] {
                    assert_eq!(*v, k0.data()[i], "cascades {cascades}, index {i}");
                }
            }
        }
    }

    #[test]
    fn parameter_mismatch_and_crop() {
        let op = ReconOperator::init(ModelSpec::Unet(UNetConfig::default()), 0).unwrap();
        let mut params = op.params().clone();
        params.insert("mid.c1.w".into(), Tensor::zeros_real(&[1]));
        assert!(ReconOperator::from_parts(op.spec().clone(), params, Precision::F64).is_err());
        assert!(ReconOperator::init(
            ModelSpec::Unet(UNetConfig {
                depth: 0,
                ..Default::default()
            }),
            0
        )
        .is_err());

        let (p, k, mask) = setup(4);
        let cropped = ReconOperator::init(
            ModelSpec::ZeroFilled {
                crop: Some([20, 24]),
            },
            0,
        )
        .unwrap();
        let out = cropped.reconstruct(&k, ctx(&mask, &p)).unwrap();
        assert_eq!((out.height(), out.width()), (20, 24));
        assert_eq!(out, zero_filled(&k).center_crop(20, 24).unwrap());
    }
}
