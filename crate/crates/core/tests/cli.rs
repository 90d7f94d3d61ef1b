use std::fs;
use std::path::Path;
use std::process::Command;

use advrec::cli::RunManifest;
use advrec::data::{load_dataset, load_records, read_manifest};
use advrec::recon::{load_checkpoint, ModelSpec, ReconOperator, UNetConfig};

fn advrec(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_advrec"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ADVREC_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = advrec(args, cwd);
    assert!(
        out.status.success(),
        "advrec {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_dataset(dir: &Path, n: &str) {
    ok(
        &[
            "phantom", "--n", n, "--size", "32", "--coils", "2", "--seed", "3", "--out", "ds",
        ],
        dir,
    );
}

#[test]
fn phantom_command_writes_reproducible_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "phantom", "--n", "20", "--size", "64", "--coils", "4", "--seed", "7", "--out", "ds/",
        ],
        d,
    );
    let m1 = read_manifest(&d.join("ds")).unwrap();
    assert_eq!(m1.records.len(), 20);
    assert!(d.join("ds/run_manifest.json").is_file());
    let run = RunManifest::read(&d.join("ds/run_manifest.json")).unwrap();
    assert_eq!(run.seeds, vec![7]);

    ok(
        &[
            "phantom", "--n", "20", "--size", "64", "--coils", "4", "--seed", "7", "--out", "ds/",
        ],
        d,
    );
    let m2 = read_manifest(&d.join("ds")).unwrap();
    let sums = |m: &advrec::data::DatasetManifest| {
        m.records
            .iter()
            .map(|r| r.sha256.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(sums(&m1), sums(&m2));
}

#[test]
fn unwritable_output_fails_without_partial_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let target = blocker.join("ds");
    let out = advrec(
        &[
            "phantom",
            "--n",
            "2",
            "--size",
            "32",
            "--out",
            target.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(advrec(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(advrec(&["phantom", "--n", "2"], d).status.code(), Some(1));
    assert_eq!(
        advrec(&["phantom", "--n", "2", "--size", "8", "--out", "x"], d)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(advrec(&["report", "--out", "r"], d).status.code(), Some(1));
    assert_eq!(advrec(&["--help"], d).status.code(), Some(0));
    small_dataset(d, "2");
    let missing = advrec(
        &[
            "attack",
            "noise",
            "--model",
            "nope.ckpt",
            "--dataset",
            "ds",
            "--out",
            "a",
        ],
        d,
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing model checkpoint"));
    let bad_lr = advrec(
        &[
            "train",
            "unet",
            "--dataset",
            "ds",
            "--lr",
            "NaN",
            "--out",
            "t",
        ],
        d,
    );
    assert_eq!(bad_lr.status.code(), Some(1));
    let diverge = advrec(
        &[
            "train",
            "unet",
            "--dataset",
            "ds",
            "--epochs",
            "2",
            "--lr",
            "1e300",
            "--loss",
            "l1",
            "--out",
            "t",
        ],
        d,
    );
    assert_eq!(
        diverge.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&diverge.stderr)
    );
}

#[test]
fn train_writes_checkpoint_and_loss_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d, "8");
    ok(
        &[
            "train",
            "unet",
            "--dataset",
            "ds",
            "--epochs",
            "0",
            "--seed",
            "5",
            "--out",
            "t0",
        ],
        d,
    );
    let m = load_checkpoint(&d.join("t0/model.ckpt")).unwrap();
    let init = ReconOperator::init(ModelSpec::Unet(UNetConfig::default()), 5).unwrap();
    assert_eq!(m.params(), init.params());
    assert_eq!(
        fs::read_to_string(d.join("t0/loss.csv")).unwrap(),
        "epoch,loss\n"
    );

    ok(&["train", "unet", "--dataset", "ds", "--out", "t"], d);
    let mut rd = csv::Reader::from_path(d.join("t/loss.csv")).unwrap();
    let losses: Vec<f64> = rd
        .records()
        .map(|r| r.unwrap()[1].parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 30);
    assert!(losses.last() < losses.first(), "{losses:?}");
}

#[test]
fn attack_and_report_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d, "3");

    ok(
        &[
            "attack",
            "noise",
            "--model",
            "zero-filled",
            "--dataset",
            "ds",
            "--eta",
            "0",
            "--out",
            "zero",
        ],
        d,
    );
    let mut rd = csv::Reader::from_path(d.join("zero/results.csv")).unwrap();
    let header = rd.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>().join(","),
        "model,R,attack,smode,param,seed,sample,ssim_base,ssim_adv,psnr_base,psnr_adv,objective"
    );
    for r in rd.records() {
        let r = r.unwrap();
        assert_eq!(r[7], r[8]);
        assert_eq!(r[9], r[10]);
    }

    for smode in ["annotated", "full"] {
        ok(
            &[
                "attack",
                "noise",
                "--model",
                "zero-filled",
                "--dataset",
                "ds",
                "--eta",
                "0.02",
                "--steps",
                "4",
                "--smode",
                smode,
                "--out",
                smode,
            ],
            d,
        );
    }
    let (_, a) = load_records(&d.join("annotated/perturbations")).unwrap();
    let (_, f) = load_records(&d.join("full/perturbations")).unwrap();
    assert_eq!(a.len(), 3);
    assert_ne!(a[0].tensor("z"), f[0].tensor("z"));
    assert_ne!(
        fs::read(d.join("annotated/results.csv")).unwrap(),
        fs::read(d.join("full/results.csv")).unwrap()
    );

    ok(
        &[
            "attack",
            "rotation",
            "--model",
            "zero-filled",
            "--dataset",
            "ds",
            "--theta-max",
            "1",
            "--grid-step",
            "0.5",
            "--out",
            "rot",
        ],
        d,
    );
    let angles = fs::read_to_string(d.join("rot/angles.csv")).unwrap();
    assert!(angles.starts_with("sample,seed,theta_max,theta,objective,ssim,psnr\n"));
    assert_eq!(angles.lines().count(), 1 + 3 * 5);

    ok(
        &[
            "report",
            "annotated",
            "rot",
            "zero",
            "--svg",
            "--out",
            "rep",
        ],
        d,
    );
    let mut rd = csv::Reader::from_path(d.join("rep/summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| &r[5] == "3"));
    assert!(d.join("rep/ssim_curve.svg").is_file());

    let pgm = |name: &str| {
        let b = fs::read(d.join("rep/images").join(name)).unwrap();
        b[b.len() - 32 * 32..].to_vec()
    };
    let diff = pgm("run2-s00000-seed0-p0-difference.pgm");
    assert!(diff.iter().all(|&v| v == 0));
    assert_eq!(
        pgm("run2-s00000-seed0-p0-baseline.pgm"),
        pgm("run2-s00000-seed0-p0-attacked.pgm")
    );
    assert!(pgm("run0-s00000-seed0-p0-difference.pgm")
        .iter()
        .any(|&v| v > 0));
}

#[test]
fn replay_reproduces_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d, "2");
    let args = [
        "attack",
        "noise",
        "--model",
        "zero-filled",
        "--dataset",
        "ds",
        "--eta",
        "0,0.01",
        "--steps",
        "3",
        "--out",
        "a",
    ];
    ok(&args, d);
    let first = fs::read(d.join("a/results.csv")).unwrap();
    let m1 = RunManifest::read(&d.join("a/run_manifest.json")).unwrap();
    ok(&args, d);
    let m2 = RunManifest::read(&d.join("a/run_manifest.json")).unwrap();
    assert_eq!(m1.replay_key(), m2.replay_key());
    assert_eq!(first, fs::read(d.join("a/results.csv")).unwrap());

    ok(&["replay", "a/run_manifest.json", "--out", "b"], d);
    assert_eq!(first, fs::read(d.join("b/results.csv")).unwrap());
    // inputs are never modified
    assert_eq!(load_dataset(&d.join("ds")).unwrap().len(), 2);
}
