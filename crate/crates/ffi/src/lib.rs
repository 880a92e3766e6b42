//! C ABI over the simulator.
//!
//! Objects cross the boundary as opaque handles created by `hf_*_new` /
//! `hf_*_from_*` and released by the matching `hf_*_free`. Every fallible
//! call returns an [`HfStatus`]; on failure the message is kept per thread
//! and can be read with [`hf_last_error`]. Strings handed out by the library
//! must be released with [`hf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hydrofcr::kpi::KpiReport;
use hydrofcr::physics;
use hydrofcr::scenario::report::write_batch;
use hydrofcr::scenario::{run_batch, Pipeline, ScenarioConfig, ScenarioMode, ScenarioOutcome};
use hydrofcr::Error;

/// Result code of every fallible call. Zero means success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    OutOfRange = 3,
    Domain = 10,
    Config = 11,
    Fit = 12,
    Cam = 13,
    Parse = 14,
    LengthMismatch = 15,
    Empty = 16,
    MissingBaseline = 17,
    Io = 18,
    Serialization = 19,
    Panic = 99,
}

impl From<&Error> for HfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => HfStatus::Domain,
            Error::Config(_) => HfStatus::Config,
            Error::Fit(_) => HfStatus::Fit,
            Error::Cam(_) => HfStatus::Cam,
            Error::Parse { .. } => HfStatus::Parse,
            Error::LengthMismatch { .. } => HfStatus::LengthMismatch,
            Error::Empty(_) => HfStatus::Empty,
            Error::MissingBaseline(_) => HfStatus::MissingBaseline,
            Error::Io { .. } => HfStatus::Io,
            Error::Json(_) | Error::Csv(_) => HfStatus::Serialization,
        }
    }
}

/// Scenario configuration.
pub struct HfConfig(ScenarioConfig);

/// Fitted surrogate plus both CAM tables, reusable across batches.
pub struct HfPipeline(Pipeline);

/// Outcomes of one batch run, one per configured mode.
pub struct HfBatch(Vec<ScenarioOutcome>);

/// Headline KPIs of one scenario.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HfKpi {
    /// 0 only_hydro, 1 hybrid_5kw, 2 hybrid_9kw, 3 var_speed.
    pub mode: u32,
    pub samples: u64,
    pub rms_te_w: f64,
    pub mileage_gvo_deg: f64,
    pub mileage_rba_deg: f64,
    pub nom_gvo: u64,
    pub nom_rba: u64,
    pub rbt_derivative_p95: f64,
    pub mean_eta_h: f64,
    pub mean_eta_g: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: HfStatus, msg: impl Into<String>) -> HfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> HfStatus {
    fail(HfStatus::from(&e), e.to_string())
}

/// Runs `f`, turning panics into `HfStatus::Panic`.
fn guard(f: impl FnOnce() -> HfStatus) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(HfStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, HfStatus> {
    if p.is_null() {
        return Err(fail(HfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, HfStatus> {
    p.as_ref()
        .ok_or_else(|| fail(HfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, HfStatus> {
    p.as_mut()
        .ok_or_else(|| fail(HfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> HfStatus {
    if out.is_null() {
        return fail(HfStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    HfStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! core {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

fn mode_index(m: ScenarioMode) -> u32 {
    ScenarioMode::ALL.iter().position(|x| *x == m).unwrap_or(0) as u32
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn hf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn hf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Droop setpoint in W for frequency `f_hz`, using the default droop settings.
#[no_mangle]
pub extern "C" fn hf_fcr_setpoint(p_disp_w: f64, f_hz: f64) -> f64 {
    physics::fcr_setpoint(p_disp_w, f_hz, &physics::DroopConfig::default())
}

/// Speed coefficient for speed `n_rev_s`, runner diameter and head.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn hf_speed_coefficient(n_rev_s: f64, diameter_m: f64, head_m: f64, out: *mut f64) -> HfStatus {
    guard(|| {
        let v = core!(physics::speed_coefficient(n_rev_s, diameter_m, head_m));
        put(out, v)
    })
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_config_new(out: *mut *mut HfConfig) -> HfStatus {
    guard(|| put(out, Box::into_raw(Box::new(HfConfig(ScenarioConfig::default())))))
}

/// Configuration parsed from TOML text; missing keys take their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_config_from_toml(toml: *const c_char, out: *mut *mut HfConfig) -> HfStatus {
    guard(|| {
        let text = tri!(str_arg(toml, "toml"));
        let cfg = core!(ScenarioConfig::from_toml(text, "<ffi>"));
        put(out, Box::into_raw(Box::new(HfConfig(cfg))))
    })
}

/// Configuration rendered as TOML; release with [`hf_string_free`].
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_config_to_toml(cfg: *const HfConfig, out: *mut *mut c_char) -> HfStatus {
    guard(|| {
        let cfg = tri!(handle(cfg, "config"));
        let text = core!(cfg.0.to_toml());
        let s = CString::new(text).unwrap_or_default();
        put(out, s.into_raw())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_config_set_seed(cfg: *mut HfConfig, seed: u64) -> HfStatus {
    guard(|| {
        tri!(handle_mut(cfg, "config")).0.seed = seed;
        HfStatus::Ok
    })
}

/// Simulated duration in seconds. Checked by [`hf_config_validate`] and
/// again before a run.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_config_set_duration(cfg: *mut HfConfig, seconds: f64) -> HfStatus {
    guard(|| {
        tri!(handle_mut(cfg, "config")).0.duration_s = seconds;
        HfStatus::Ok
    })
}

/// Restricts the batch to the modes in `modes[..len]`, given as indices
/// (see [`HfKpi::mode`]).
///
/// # Safety
/// `cfg` must be a live handle and `modes` point to `len` integers.
#[no_mangle]
pub unsafe extern "C" fn hf_config_set_modes(cfg: *mut HfConfig, modes: *const u32, len: usize) -> HfStatus {
    guard(|| {
        let cfg = tri!(handle_mut(cfg, "config"));
        if modes.is_null() && len > 0 {
            return fail(HfStatus::NullPointer, "modes is null");
        }
        let idx = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(modes, len)
        };
        let mut picked = Vec::with_capacity(len);
        for &i in idx {
            match ScenarioMode::ALL.get(i as usize) {
                Some(m) => picked.push(*m),
                None => return fail(HfStatus::OutOfRange, format!("mode index {i} out of range")),
            }
        }
        cfg.0.modes = picked;
        HfStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_config_validate(cfg: *const HfConfig) -> HfStatus {
    guard(|| {
        core!(tri!(handle(cfg, "config")).0.validate());
        HfStatus::Ok
    })
}

/// # Safety
/// `cfg` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hf_config_free(cfg: *mut HfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Samples the hill chart, fits the surrogate and builds the CAM tables.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_pipeline_build(cfg: *const HfConfig, out: *mut *mut HfPipeline) -> HfStatus {
    guard(|| {
        let cfg = tri!(handle(cfg, "config"));
        core!(cfg.0.validate());
        let p = core!(Pipeline::build(&cfg.0));
        put(out, Box::into_raw(Box::new(HfPipeline(p))))
    })
}

/// # Safety
/// `p` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hf_pipeline_free(p: *mut HfPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs every configured mode on the configured frequency series.
///
/// # Safety
/// `cfg` and `pipeline` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_run_batch(
    cfg: *const HfConfig,
    pipeline: *const HfPipeline,
    out: *mut *mut HfBatch,
) -> HfStatus {
    guard(|| {
        let cfg = tri!(handle(cfg, "config"));
        let p = tri!(handle(pipeline, "pipeline"));
        core!(cfg.0.validate());
        let freq = core!(cfg.0.frequency_series());
        let outcomes = core!(run_batch(&cfg.0, &p.0, &freq));
        put(out, Box::into_raw(Box::new(HfBatch(outcomes))))
    })
}

/// Number of scenarios in the batch; 0 for a null handle.
///
/// # Safety
/// `batch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_batch_len(batch: *const HfBatch) -> usize {
    batch.as_ref().map_or(0, |b| b.0.len())
}

unsafe fn outcome<'a>(batch: *const HfBatch, index: usize) -> Result<&'a ScenarioOutcome, HfStatus> {
    let b = handle(batch, "batch")?;
    b.0.get(index)
        .ok_or_else(|| fail(HfStatus::OutOfRange, format!("index {index} >= {}", b.0.len())))
}

fn kpi(mode: ScenarioMode, r: &KpiReport) -> HfKpi {
    HfKpi {
        mode: mode_index(mode),
        samples: r.samples as u64,
        rms_te_w: r.rms_te_w,
        mileage_gvo_deg: r.mileage_gvo_deg,
        mileage_rba_deg: r.mileage_rba_deg,
        nom_gvo: r.nom_gvo,
        nom_rba: r.nom_rba,
        rbt_derivative_p95: r.rbt_derivative_p95,
        mean_eta_h: r.mean_eta_h,
        mean_eta_g: r.mean_eta_g,
    }
}

/// # Safety
/// `batch` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_batch_kpi(batch: *const HfBatch, index: usize, out: *mut HfKpi) -> HfStatus {
    guard(|| {
        let o = tri!(outcome(batch, index));
        put(out, kpi(o.mode, &o.report))
    })
}

/// Full KPI report as JSON; release with [`hf_string_free`].
///
/// # Safety
/// `batch` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_batch_kpi_json(batch: *const HfBatch, index: usize, out: *mut *mut c_char) -> HfStatus {
    guard(|| {
        let o = tri!(outcome(batch, index));
        let text = core!(o.report.to_json());
        put(out, CString::new(text).unwrap_or_default().into_raw())
    })
}

/// Writes traces, KPI files and the comparison table into `dir`.
///
/// # Safety
/// `batch` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hf_batch_write(batch: *const HfBatch, dir: *const c_char) -> HfStatus {
    guard(|| {
        let b = tri!(handle(batch, "batch"));
        let dir = tri!(str_arg(dir, "dir"));
        core!(write_batch(Path::new(dir), &b.0));
        HfStatus::Ok
    })
}

/// # Safety
/// `batch` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hf_batch_free(batch: *mut HfBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}
