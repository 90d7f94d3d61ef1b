//! Command-line front end: dataset generation, training, attack sweeps and reporting.
//!
//! Every command writes a `run_manifest.json` into its output directory. The
//! manifest carries the full argument set, so `advrec replay` can rerun it.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{self, AttackKind, NoiseAttackConfig, RegionMode, SweepJob, SweepSpec};
use crate::autodiff::Tensor;
use crate::data::blob::sha256_hex;
use crate::data::{
    generate_phantom, load_dataset, save_dataset, save_records, Phantom, RecordKind, TensorRecord,
};
use crate::error::{Error, Result};
use crate::recon::{
    load_checkpoint, save_checkpoint, train, LossKind, ModelSpec, ReconOperator, TrainConfig,
    UNetConfig, VarNetConfig,
};

pub use report::{dump_pgm, summarize, write_pgm, write_svg_chart, SummaryRow};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const ANGLES_CSV: &str = "angles.csv";
pub const LOSS_CSV: &str = "loss.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const PERTURBATIONS_DIR: &str = "perturbations";
/// Overrides the default worker count when `--workers` is not given.
pub const WORKERS_ENV: &str = "ADVREC_WORKERS";
/// Accepted by `--model` in place of a checkpoint path.
pub const ZERO_FILLED_MODEL: &str = "zero-filled";

#[derive(Debug, Parser)]
#[command(
    name = "advrec",
    version,
    about = "Adversarial robustness workbench for undersampled MR reconstruction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic multi-coil phantom dataset.
    Phantom(PhantomArgs),
    /// Train a learned reconstruction operator.
    Train(TrainArgs),
    /// Run a noise or rotation attack sweep.
    Attack(AttackArgs),
    /// Aggregate attack runs into a summary table and image dumps.
    Report(ReportArgs),
    /// Rerun the command recorded in a run manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phantom(_) => "phantom",
            Command::Train(_) => "train",
            Command::Attack(_) => "attack",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }

    fn out(&self) -> &Path {
        match self {
            Command::Phantom(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Attack(a) => &a.out,
            Command::Report(a) => &a.out,
            Command::Replay(a) => a.out.as_deref().unwrap_or(&a.manifest),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PhantomArgs {
    /// Number of phantoms.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Image height and width.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub coils: usize,
    /// Phantom `i` is generated from `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Unet,
    Varnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    L1,
    Ssim,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub model: ModelArg,
    /// Acceleration factor of the training masks.
    #[arg(short = 'R', long = "acceleration", default_value_t = 4)]
    pub r: u32,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Ssim)]
    pub loss: LossArg,
    /// Seeds the initialization, the sample order and the training masks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Channels of the first UNet level (default 8 for UNet, 6 inside VarNet).
    #[arg(long)]
    pub top_channels: Option<usize>,
    /// UNet depth (default 3 for UNet, 2 inside VarNet).
    #[arg(long)]
    pub depth: Option<usize>,
    /// VarNet cascades.
    #[arg(long, default_value_t = 4)]
    pub cascades: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackArg {
    Noise,
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmodeArg {
    Annotated,
    Full,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AttackArgs {
    #[arg(value_enum)]
    pub kind: AttackArg,
    /// Checkpoint path, or `zero-filled`.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Region the objective is restricted to.
    #[arg(long, value_enum, default_value_t = SmodeArg::Annotated)]
    pub smode: SmodeArg,
    #[arg(short = 'R', long = "acceleration", default_value_t = 4)]
    pub r: u32,
    /// Relative per-coil noise budgets.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.005,0.01,0.015,0.02,0.025"
    )]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Per-step move as a fraction of each coil's budget.
    #[arg(long, default_value_t = 0.5)]
    pub step_size: f64,
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Maximal rotation angles in degrees.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub theta_max: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub grid_step: f64,
    /// Attack seeds; every (sample, seed) pair is one run.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Use only the first this many samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Worker threads (default: $ADVREC_WORKERS, then all logical processors).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Attack output directories.
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an SVG line chart of mean attacked SSIM per sweep.
    #[arg(long)]
    pub svg: bool,
    /// Image triplets dumped per run.
    #[arg(long, default_value_t = 4)]
    pub max_images: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A `run_manifest.json` file.
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A file consumed by a run, with its digest at the time of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub invocation: Command,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub inputs: Vec<InputRef>,
    pub output: PathBuf,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    /// Everything except the wall-clock fields. Runs with equal keys write identical CSV files.
    pub fn replay_key(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        let obj = v.as_object_mut().expect("object");
        obj.remove("started_at");
        obj.remove("elapsed_seconds");
        v
    }
}

fn digest_file(path: &Path) -> Result<InputRef> {
    Ok(InputRef {
        path: path.to_path_buf(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

fn write_manifest(
    cmd: &Command,
    seeds: Vec<u64>,
    inputs: Vec<InputRef>,
    started: (f64, Instant),
) -> Result<RunManifest> {
    let m = RunManifest {
        invocation: cmd.clone(),
        seeds,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        output: cmd.out().to_path_buf(),
        started_at: started.0,
        elapsed_seconds: started.1.elapsed().as_secs_f64(),
    };
    let path = cmd.out().join(RUN_MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(m)
}

/// Executes one command and returns the manifest it wrote.
pub fn run(cmd: &Command) -> Result<RunManifest> {
    let started = (
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        Instant::now(),
    );
    match cmd {
        Command::Phantom(a) => {
            cmd_phantom(a)?;
            write_manifest(cmd, vec![a.seed], Vec::new(), started)
        }
        Command::Train(a) => {
            let inputs = vec![digest_file(&a.dataset.join("manifest.json"))?];
            cmd_train(a)?;
            write_manifest(cmd, vec![a.seed], inputs, started)
        }
        Command::Attack(a) => {
            let mut inputs = vec![digest_file(&a.dataset.join("manifest.json"))?];
            if a.model != ZERO_FILLED_MODEL {
                let p = Path::new(&a.model);
                if !p.is_file() {
                    return Err(Error::MissingCheckpoint(p.to_path_buf()));
                }
                inputs.push(digest_file(p)?);
            }
            cmd_attack(a)?;
            write_manifest(cmd, a.seeds.clone(), inputs, started)
        }
        Command::Report(a) => {
            let inputs = a
                .runs
                .iter()
                .map(|r| digest_file(&r.join(RESULTS_CSV)))
                .collect::<Result<Vec<_>>>()?;
            cmd_report(a)?;
            write_manifest(cmd, Vec::new(), inputs, started)
        }
        Command::Replay(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let mut inner = m.invocation;
            if let Some(out) = &a.out {
                match &mut inner {
                    Command::Phantom(x) => x.out = out.clone(),
                    Command::Train(x) => x.out = out.clone(),
                    Command::Attack(x) => x.out = out.clone(),
                    Command::Report(x) => x.out = out.clone(),
                    Command::Replay(_) => {}
                }
            }
            if matches!(inner, Command::Replay(_)) {
                return Err(Error::Manifest(
                    "a replay manifest cannot be replayed".into(),
                ));
            }
            run(&inner)
        }
    }
}

pub fn cmd_phantom(a: &PhantomArgs) -> Result<Vec<Phantom>> {
    if a.n == 0 {
        return Err(Error::invalid("--n must be at least 1"));
    }
    let phantoms = (0..a.n)
        .into_par_iter()
        .map(|i| generate_phantom(a.size, a.size, a.coils, a.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    save_dataset(&a.out, &phantoms)?;
    Ok(phantoms)
}

fn model_spec(a: &TrainArgs) -> ModelSpec {
    match a.model {
        ModelArg::Unet => {
            let d = UNetConfig::default();
            ModelSpec::Unet(UNetConfig {
                top_channels: a.top_channels.unwrap_or(d.top_channels),
                depth: a.depth.unwrap_or(d.depth),
                ..d
            })
        }
        ModelArg::Varnet => {
            let d = VarNetConfig::default();
            ModelSpec::Varnet(VarNetConfig {
                cascades: a.cascades,
                unet_top_channels: a.top_channels.unwrap_or(d.unet_top_channels),
                unet_depth: a.depth.unwrap_or(d.unet_depth),
                ..d
            })
        }
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<ReconOperator> {
    let dataset = load_dataset(&a.dataset)?;
    let init = ReconOperator::init(model_spec(a), a.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        loss: match a.loss {
            LossArg::L1 => LossKind::L1,
            LossArg::Ssim => LossKind::OneMinusSsim,
        },
        seed: a.seed,
        acceleration: a.r,
        fixed_mask_seed: None,
    };
    let outcome = train(&init, &dataset, &cfg)?;
    fs::create_dir_all(&a.out)?;
    save_checkpoint(&outcome.model, &a.out.join(CHECKPOINT_FILE))?;
    let mut w = csv::Writer::from_path(a.out.join(LOSS_CSV))?;
    w.write_record(["epoch", "loss"])?;
    for (i, l) in outcome.losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(outcome.model)
}

/// `zero-filled` or a checkpoint; the second value is the model column of the results table.
pub fn load_model(spec: &str) -> Result<(ReconOperator, String)> {
    if spec == ZERO_FILLED_MODEL {
        return Ok((ReconOperator::zero_filled(), "zero_filled".into()));
    }
    let m = load_checkpoint(Path::new(spec))?;
    let name = m.kind().name().to_string();
    Ok((m, name))
}

/// `--workers`, then the environment override, then 0 (all logical processors).
pub fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{WORKERS_ENV}={v:?} is not a worker count"))),
        Err(_) => Ok(0),
    }
}

#[derive(Debug, Serialize)]
struct AngleRow {
    sample: usize,
    seed: u64,
    theta_max: f64,
    theta: f64,
    objective: f64,
    ssim: f64,
    psnr: f64,
}

fn job_record(
    job: &SweepJob,
    index: usize,
    annotations: &[crate::data::AnnotationBox],
) -> Result<TensorRecord> {
    let r = &job.report;
    let img = |i: &crate::mri::ReconImage| i.to_tensor();
    let mut tensors = vec![
        ("baseline".to_string(), img(&r.baseline_image)),
        ("attacked".to_string(), img(&r.attacked_image)),
    ];
    match &r.perturbation {
        attack::Perturbation::Noise(z) => tensors.push(("z".into(), z.to_tensor())),
        attack::Perturbation::Rotation { theta } => {
            tensors.push(("theta".into(), Tensor::real(&[1], vec![*theta])?))
        }
    }
    Ok(TensorRecord {
        id: format!("s{:05}-seed{}-p{index}", job.row.sample, job.row.seed),
        seed: job.row.seed,
        annotations: annotations.to_vec(),
        tensors,
    })
}

pub fn cmd_attack(a: &AttackArgs) -> Result<Vec<SweepJob>> {
    let (model, name) = load_model(&a.model)?;
    let mut dataset = load_dataset(&a.dataset)?;
    if let Some(n) = a.samples {
        dataset.truncate(n);
    }
    let (kind, params) = match a.kind {
        AttackArg::Noise => (AttackKind::Noise, a.eta.clone()),
        AttackArg::Rotation => (AttackKind::Rotation, a.theta_max.clone()),
    };
    let spec = SweepSpec {
        kind,
        params,
        smode: match a.smode {
            SmodeArg::Annotated => RegionMode::Annotated,
            SmodeArg::Full => RegionMode::Full,
        },
        acceleration: a.r,
        seeds: a.seeds.clone(),
        noise: NoiseAttackConfig {
            steps: a.steps,
            step_size: a.step_size,
            restarts: a.restarts,
            ..Default::default()
        },
        grid_step: a.grid_step,
        workers: resolve_workers(a.workers)?,
    };
    let jobs = attack::sweep(&model, &name, &dataset, &spec)?;

    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join(RESULTS_CSV))?;
    for j in &jobs {
        w.serialize(&j.row)?;
    }
    w.flush()?;

    if kind == AttackKind::Rotation {
        let mut w = csv::Writer::from_path(a.out.join(ANGLES_CSV))?;
        for j in &jobs {
            for pt in &j.report.curve {
                w.serialize(AngleRow {
                    sample: j.row.sample,
                    seed: j.row.seed,
                    theta_max: j.row.param,
                    theta: pt.theta,
                    objective: pt.objective,
                    ssim: pt.ssim,
                    psnr: pt.psnr,
                })?;
            }
        }
        w.flush()?;
    }

    let n_params = jobs.len() / (dataset.len() * a.seeds.len()).max(1);
    let records = jobs
        .iter()
        .enumerate()
        .map(|(i, j)| job_record(j, i % n_params.max(1), &dataset[j.row.sample].annotations))
        .collect::<Result<Vec<_>>>()?;
    save_records(
        &a.out.join(PERTURBATIONS_DIR),
        RecordKind::Perturbation,
        &records,
    )?;
    Ok(jobs)
}

pub fn cmd_report(a: &ReportArgs) -> Result<Vec<SummaryRow>> {
    if a.runs.is_empty() {
        return Err(Error::invalid("report needs at least one run directory"));
    }
    let mut rows = Vec::new();
    for run in &a.runs {
        let mut rd = csv::Reader::from_path(run.join(RESULTS_CSV))?;
        for r in rd.deserialize() {
            rows.push(r?);
        }
    }
    let summary = summarize(&rows);
    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("summary.csv"))?;
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush()?;
    if a.svg {
        fs::write(a.out.join("ssim_curve.svg"), write_svg_chart(&summary))?;
    }
    let images = a.out.join("images");
    for (i, run) in a.runs.iter().enumerate() {
        let pert = run.join(PERTURBATIONS_DIR);
        if !pert.join("manifest.json").is_file() {
            continue;
        }
        let (_, records) = crate::data::load_records(&pert)?;
        fs::create_dir_all(&images)?;
        for rec in records.iter().take(a.max_images) {
            dump_pgm(&images, &format!("run{i}-{}", rec.id), rec)?;
        }
    }
    Ok(summary)
}
