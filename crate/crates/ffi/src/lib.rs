//! C interface to the advrec workbench.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an
//! [`AdvrecStatus`]; on failure [`advrec_last_error`] describes the problem.
//! Panics are caught at the boundary and reported as `ADVREC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::os::raw::c_int;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use advrec::attack::{sweep, AttackKind, NoiseAttackConfig, RegionMode, SweepJob, SweepSpec};
use advrec::data::{generate_phantom, load_dataset, save_dataset, Phantom};
use advrec::mri::SamplingMask;
use advrec::recon::{load_checkpoint, save_checkpoint, ReconContext, ReconOperator};
use advrec::{Error, ErrorClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvrecStatus {
    Ok = 0,
    /// Bad argument, null pointer, shape mismatch or undersized buffer.
    Usage = 1,
    /// I/O, format, checksum or version problem.
    Data = 2,
    /// Non-finite values or divergence.
    Numerical = 3,
    Panic = 4,
}

/// A list of phantoms.
pub struct AdvrecDataset {
    phantoms: Vec<Phantom>,
}

/// A reconstruction operator.
pub struct AdvrecModel {
    op: ReconOperator,
}

/// Outcome of one attack on one phantom.
pub struct AdvrecAttackResult {
    job: SweepJob,
}

/// Summary numbers of an attack, filled by [`advrec_result_metrics`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AdvrecMetrics {
    pub ssim_base: f64,
    pub ssim_adv: f64,
    pub psnr_base: f64,
    pub psnr_adv: f64,
    pub objective_base: f64,
    pub objective_adv: f64,
    /// Chosen angle in degrees for rotation attacks, 0 for noise attacks.
    pub theta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Lib(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AdvrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdvrecStatus::Ok,
        Ok(Err(Failure::Usage(msg))) => {
            set_error(msg);
            AdvrecStatus::Usage
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e.class() {
                ErrorClass::Usage => AdvrecStatus::Usage,
                ErrorClass::Data => AdvrecStatus::Data,
                ErrorClass::Numerical => AdvrecStatus::Numerical,
            }
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            AdvrecStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::Usage(format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Usage("path is null".into()));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Usage("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Usage("output handle pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if buf.is_null() || len < src.len() {
        return Err(Failure::Usage(format!(
            "buffer must hold {} values, got {len}",
            src.len()
        )));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn phantom(ds: &AdvrecDataset, index: usize) -> Result<&Phantom, Failure> {
    ds.phantoms.get(index).ok_or_else(|| {
        Failure::Usage(format!(
            "index {index} out of range for {} phantoms",
            ds.phantoms.len()
        ))
    })
}

/// Message of the last failed call on this thread. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn advrec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn advrec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates `n` square phantoms; phantom `i` uses seed `seed + i`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn advrec_dataset_generate(
    n: usize,
    size: usize,
    coils: usize,
    seed: u64,
    out: *mut *mut AdvrecDataset,
) -> AdvrecStatus {
    guard(|| {
        let phantoms = (0..n)
            .map(|i| generate_phantom(size, size, coils, seed.wrapping_add(i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        put(out, AdvrecDataset { phantoms })
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn advrec_dataset_load(
    path: *const c_char,
    out: *mut *mut AdvrecDataset,
) -> AdvrecStatus {
    guard(|| {
        let phantoms = load_dataset(&path_arg(path)?)?;
        put(out, AdvrecDataset { phantoms })
    })
}

/// # Safety
/// `ds` must be a live dataset handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn advrec_dataset_save(
    ds: *const AdvrecDataset,
    path: *const c_char,
) -> AdvrecStatus {
    guard(|| {
        save_dataset(&path_arg(path)?, &deref(ds, "dataset")?.phantoms)?;
        Ok(())
    })
}

/// Number of phantoms, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn advrec_dataset_len(ds: *const AdvrecDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.phantoms.len())
}

/// Height, width and coil count of one phantom.
///
/// # Safety
/// `ds` must be a live dataset handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn advrec_dataset_dims(
    ds: *const AdvrecDataset,
    index: usize,
    height: *mut usize,
    width: *mut usize,
    coils: *mut usize,
) -> AdvrecStatus {
    guard(|| {
        let p = phantom(deref(ds, "dataset")?, index)?;
        if height.is_null() || width.is_null() || coils.is_null() {
            return Err(Failure::Usage("output pointer is null".into()));
        }
        *height = p.height();
        *width = p.width();
        *coils = p.num_coils();
        Ok(())
    })
}

/// Copies the row-major reference image of one phantom into `buf`.
///
/// # Safety
/// `ds` must be a live dataset handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn advrec_dataset_image(
    ds: *const AdvrecDataset,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> AdvrecStatus {
    guard(|| {
        copy_out(
            phantom(deref(ds, "dataset")?, index)?.image.pixels(),
            buf,
            len,
        )
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn advrec_dataset_free(ds: *mut AdvrecDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn advrec_model_zero_filled(out: *mut *mut AdvrecModel) -> AdvrecStatus {
    guard(|| {
        put(
            out,
            AdvrecModel {
                op: ReconOperator::zero_filled(),
            },
        )
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn advrec_model_load(
    path: *const c_char,
    out: *mut *mut AdvrecModel,
) -> AdvrecStatus {
    guard(|| {
        let op = load_checkpoint(&path_arg(path)?)?;
        put(out, AdvrecModel { op })
    })
}

/// # Safety
/// `model` must be a live model handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn advrec_model_save(
    model: *const AdvrecModel,
    path: *const c_char,
) -> AdvrecStatus {
    guard(|| {
        save_checkpoint(&deref(model, "model")?.op, &path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn advrec_model_free(model: *mut AdvrecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reconstructs phantom `index` from k-space undersampled at `acceleration`
/// with the phantom's own mask seed, writing `height·width` doubles to `buf`.
///
/// # Safety
/// Handles must be live and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn advrec_reconstruct(
    model: *const AdvrecModel,
    ds: *const AdvrecDataset,
    index: usize,
    acceleration: u32,
    buf: *mut f64,
    len: usize,
) -> AdvrecStatus {
    guard(|| {
        let op = &deref(model, "model")?.op;
        let p = phantom(deref(ds, "dataset")?, index)?;
        let cf = SamplingMask::default_center_fraction(acceleration);
        let mask = SamplingMask::cartesian(p.width(), acceleration, cf, p.seed)?;
        let k = p.kspace().apply_mask(&mask)?;
        let img = op.reconstruct(
            &k,
            ReconContext {
                mask: &mask,
                maps: Some(&p.maps),
            },
        )?;
        copy_out(img.pixels(), buf, len)
    })
}

unsafe fn run_attack(
    model: *const AdvrecModel,
    ds: *const AdvrecDataset,
    index: usize,
    full_region: c_int,
    spec: SweepSpec,
    out: *mut *mut AdvrecAttackResult,
) -> Result<(), Failure> {
    let op = &deref(model, "model")?.op;
    let p = phantom(deref(ds, "dataset")?, index)?;
    let spec = SweepSpec {
        smode: if full_region != 0 {
            RegionMode::Full
        } else {
            RegionMode::Annotated
        },
        workers: 1,
        ..spec
    };
    let mut jobs = sweep(op, op.kind().name(), std::slice::from_ref(p), &spec)?;
    let mut job = jobs.pop().expect("one job");
    job.row.sample = index;
    put(out, AdvrecAttackResult { job })
}

/// Projected gradient attack with per-coil budget `eta` (relative to each
/// coil's k-space norm). The objective covers the annotation box, or the
/// whole image when `full_region` is nonzero.
///
/// # Safety
/// Handles must be live and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn advrec_noise_attack(
    model: *const AdvrecModel,
    ds: *const AdvrecDataset,
    index: usize,
    acceleration: u32,
    full_region: c_int,
    eta: f64,
    steps: usize,
    seed: u64,
    out: *mut *mut AdvrecAttackResult,
) -> AdvrecStatus {
    guard(|| {
        let spec = SweepSpec {
            kind: AttackKind::Noise,
            params: vec![eta],
            acceleration,
            seeds: vec![seed],
            noise: NoiseAttackConfig {
                steps,
                ..Default::default()
            },
            ..Default::default()
        };
        run_attack(model, ds, index, full_region, spec, out)
    })
}

/// Worst-case rotation in `[-theta_max, theta_max]` degrees on a grid of `grid_step`.
///
/// # Safety
/// Handles must be live and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn advrec_rotation_attack(
    model: *const AdvrecModel,
    ds: *const AdvrecDataset,
    index: usize,
    acceleration: u32,
    full_region: c_int,
    theta_max: f64,
    grid_step: f64,
    out: *mut *mut AdvrecAttackResult,
) -> AdvrecStatus {
    guard(|| {
        let spec = SweepSpec {
            kind: AttackKind::Rotation,
            params: vec![theta_max],
            acceleration,
            grid_step,
            ..Default::default()
        };
        run_attack(model, ds, index, full_region, spec, out)
    })
}

/// # Safety
/// `res` must be a live result handle and `metrics` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn advrec_result_metrics(
    res: *const AdvrecAttackResult,
    metrics: *mut AdvrecMetrics,
) -> AdvrecStatus {
    guard(|| {
        let job = &deref(res, "result")?.job;
        if metrics.is_null() {
            return Err(Failure::Usage("metrics pointer is null".into()));
        }
        *metrics = AdvrecMetrics {
            ssim_base: job.row.ssim_base,
            ssim_adv: job.row.ssim_adv,
            psnr_base: job.row.psnr_base,
            psnr_adv: job.row.psnr_adv,
            objective_base: job.report.baseline_objective,
            objective_adv: job.report.attacked_objective,
            theta: job.report.theta().unwrap_or(0.0),
        };
        Ok(())
    })
}

/// Copies an image of the result: 0 = baseline, 1 = attacked, 2 = |attacked − baseline|.
///
/// # Safety
/// `res` must be a live result handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn advrec_result_image(
    res: *const AdvrecAttackResult,
    which: c_int,
    buf: *mut f64,
    len: usize,
) -> AdvrecStatus {
    guard(|| {
        let r = &deref(res, "result")?.job.report;
        match which {
            0 => copy_out(r.baseline_image.pixels(), buf, len),
            1 => copy_out(r.attacked_image.pixels(), buf, len),
            2 => copy_out(r.difference_image().pixels(), buf, len),
            _ => Err(Failure::Usage(format!("unknown image selector {which}"))),
        }
    })
}

/// # Safety
/// `res` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn advrec_result_free(res: *mut AdvrecAttackResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
