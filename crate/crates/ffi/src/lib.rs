//! C ABI over the simulation engine.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns an
//! [`OpoStatus`]; on failure [`opo_last_error`] describes the problem for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cascade_opo::config::{Engine, RunConfig};
use cascade_opo::dynamics::{Pump, PulseTrain, SystemParams};
use cascade_opo::fock::DensityMatrix;
use cascade_opo::observables;
use cascade_opo::polarization::{self, FourModeDims};
use cascade_opo::runner::{self, Command, Overrides, RunError};
use cascade_opo::semiclassical;
use cascade_opo::trajectories::{self, rate_scale, EnsembleOptions, QsdModel};
use num_complex::Complex64 as C64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpoStatus {
    Ok = 0,
    Error = 1,
    Config = 2,
    TruncationOverflow = 3,
    OracleBudget = 4,
    NumericalCollapse = 5,
    NullPointer = 6,
    InvalidArgument = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpoSeries {
    Times = 0,
    N1 = 1,
    SeN1 = 2,
    N2 = 3,
    SeN2 = 4,
    /// Undefined entries are NaN.
    G3 = 5,
    SeG3 = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpoCommand {
    Simulate = 0,
    Oracle = 1,
    Semiclassical = 2,
    Threshold = 3,
    Wigner = 4,
    Triplet = 5,
    Coupling = 6,
}

/// Parsed run configuration.
pub struct OpoConfig {
    inner: RunConfig,
}

/// Time series of one run.
pub struct OpoRunResult {
    series: [Vec<f64>; 7],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (OpoStatus, String);

fn status_of(e: &RunError) -> OpoStatus {
    match e.exit_code() {
        2 => OpoStatus::Config,
        3 => OpoStatus::TruncationOverflow,
        4 => OpoStatus::OracleBudget,
        5 => OpoStatus::NumericalCollapse,
        _ => OpoStatus::Error,
    }
}

fn run_error(e: impl Into<RunError>) -> Failure {
    let e = e.into();
    (status_of(&e), e.to_string())
}

fn invalid(msg: &str) -> Failure {
    (OpoStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OpoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OpoStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            OpoStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((OpoStatus::NullPointer, "null string".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("string is not UTF-8"))
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or((OpoStatus::NullPointer, "null output pointer".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn opo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn opo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Parses configuration text. On success `*out` receives a new handle.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_config_parse(toml: *const c_char, out: *mut *mut OpoConfig) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        let inner = RunConfig::parse(text(toml)?).map_err(run_error)?;
        *out = Box::into_raw(Box::new(OpoConfig { inner }));
        Ok(())
    })
}

/// Reads and parses a configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_config_load(path: *const c_char, out: *mut *mut OpoConfig) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        let inner = RunConfig::from_path(Path::new(text(path)?)).map_err(run_error)?;
        *out = Box::into_raw(Box::new(OpoConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn opo_config_set_seed(config: *mut OpoConfig, seed: u64) -> OpoStatus {
    guard(|| {
        out_ref(config)?.inner.run.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn opo_config_set_workers(config: *mut OpoConfig, workers: usize) -> OpoStatus {
    guard(|| {
        out_ref(config)?.inner.run.workers = workers;
        Ok(())
    })
}

/// # Safety
/// `config` must be a handle from this library or NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn opo_config_free(config: *mut OpoConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

fn nan_if_none(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
}

fn simulate(cfg: &RunConfig) -> Result<OpoRunResult, Failure> {
    let params = cfg.params();
    let pump = cfg.pump();
    let schedule = cfg.schedule();
    if cfg.run.engine == Engine::Semiclassical {
        let r = semiclassical::sde_run(
            &params,
            &pump,
            &schedule,
            cfg.run.trajectories,
            cfg.run.seed,
            cfg.run.drift_variant,
            cfg.run.workers,
        )
        .map_err(run_error)?;
        let nan = vec![f64::NAN; r.times.len()];
        return Ok(OpoRunResult {
            series: [r.times, r.n1, r.se_n1, r.n2, r.se_n2, nan.clone(), nan],
        });
    }
    let dims = cfg.dims();
    let model = QsdModel::new(&params, &pump, &dims);
    let initial = cfg.run.initial.build(&dims).map_err(run_error)?;
    if cfg.run.engine == Engine::Oracle {
        let s = trajectories::master_equation_oracle(&model, &schedule, &initial, false, cfg.run.leakage_tolerance)
            .map_err(run_error)?;
        let g3: Vec<Option<f64>> = (0..s.times.len()).map(|i| s.g3(i)).collect();
        let zeros = vec![0.0; s.times.len()];
        let se_g3 = g3.iter().map(|g| g.map_or(f64::NAN, |_| 0.0)).collect();
        return Ok(OpoRunResult {
            series: [s.times, s.n1, zeros.clone(), s.n2, zeros, nan_if_none(&g3), se_g3],
        });
    }
    schedule.validate(rate_scale(&params, &pump)).map_err(run_error)?;
    let options = EnsembleOptions {
        workers: cfg.run.workers,
        leakage_tolerance: cfg.run.leakage_tolerance,
        ..EnsembleOptions::default()
    };
    let r = trajectories::ensemble_average(&model, &schedule, &initial, cfg.run.trajectories, cfg.run.seed, &options)
        .map_err(run_error)?;
    Ok(OpoRunResult {
        series: [r.times, r.n1, r.se_n1, r.n2, r.se_n2, nan_if_none(&r.g3), nan_if_none(&r.se_g3)],
    })
}

/// Runs the configured engine in memory (no files) and returns the time series.
///
/// # Safety
/// `config` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_run(config: *const OpoConfig, out: *mut *mut OpoRunResult) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        let cfg = config.as_ref().ok_or((OpoStatus::NullPointer, "null config".into()))?;
        *out = Box::into_raw(Box::new(simulate(&cfg.inner)?));
        Ok(())
    })
}

/// Number of samples in `result` (0 for NULL).
///
/// # Safety
/// `result` must be a handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn opo_result_len(result: *const OpoRunResult) -> usize {
    result.as_ref().map_or(0, |r| r.series[0].len())
}

/// Copies one column into `buffer`, which must hold `len` doubles with
/// `len >= opo_result_len(result)`.
///
/// # Safety
/// `result` must be a valid handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn opo_result_copy(
    result: *const OpoRunResult,
    series: OpoSeries,
    buffer: *mut f64,
    len: usize,
) -> OpoStatus {
    guard(|| {
        let r = result.as_ref().ok_or((OpoStatus::NullPointer, "null result".into()))?;
        if buffer.is_null() {
            return Err((OpoStatus::NullPointer, "null buffer".into()));
        }
        let column = &r.series[series as usize];
        if len < column.len() {
            return Err(invalid("buffer too short"));
        }
        std::slice::from_raw_parts_mut(buffer, column.len()).copy_from_slice(column);
        Ok(())
    })
}

/// # Safety
/// `result` must be a handle from this library or NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn opo_result_free(result: *mut OpoRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Runs a CLI command, writing its outputs to `out_dir`. `config_path` may be
/// NULL for the triplet command.
///
/// # Safety
/// Both strings must be NUL-terminated (or `config_path` NULL).
#[no_mangle]
pub unsafe extern "C" fn opo_execute(
    command: OpoCommand,
    config_path: *const c_char,
    out_dir: *const c_char,
) -> OpoStatus {
    guard(|| {
        let command = match command {
            OpoCommand::Simulate => Command::Simulate,
            OpoCommand::Oracle => Command::Oracle,
            OpoCommand::Semiclassical => Command::Semiclassical,
            OpoCommand::Threshold => Command::Threshold,
            OpoCommand::Wigner => Command::Wigner,
            OpoCommand::Triplet => Command::Triplet,
            OpoCommand::Coupling => Command::Coupling,
        };
        let config = match config_path.is_null() {
            true => None,
            false => Some(Path::new(text(config_path)?)),
        };
        runner::execute(command, config, Path::new(text(out_dir)?), Overrides::default()).map_err(run_error)?;
        Ok(())
    })
}

/// Threshold drive rate for the configuration's pump.
///
/// # Safety
/// `config` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_config_threshold(config: *const OpoConfig, out: *mut f64) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        let cfg = config.as_ref().ok_or((OpoStatus::NullPointer, "null config".into()))?;
        *out = semiclassical::threshold(&cfg.inner.params(), &cfg.inner.pump()).map_err(run_error)?.drive;
        Ok(())
    })
}

/// Threshold drive of a Gaussian pulse train with equal decay rates `gamma`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_pulsed_threshold(gamma: f64, duration: f64, tau: f64, out: *mut f64) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        let train = PulseTrain::new(duration, tau, 4.0 * duration, false);
        let params = SystemParams {
            chi1: 1.0,
            chi2: 0.0,
            gamma0: 1.0,
            gamma1: gamma,
            gamma2: gamma,
            drive: 0.0,
        };
        let pump = Pump::Pulsed(train);
        pump.validate().map_err(run_error)?;
        *out = semiclassical::threshold(&params, &pump).map_err(run_error)?.drive;
        Ok(())
    })
}

/// Normalized third-order correlation of a photon-number distribution.
/// Fails with `OPO_STATUS_INVALID_ARGUMENT` when the mean is below the
/// reporting guard.
///
/// # Safety
/// `p` must be valid for `len` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_g3(p: *const f64, len: usize, out: *mut f64) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        if p.is_null() {
            return Err((OpoStatus::NullPointer, "null distribution".into()));
        }
        if len == 0 {
            return Err(invalid("empty distribution"));
        }
        let rho = DensityMatrix::from_diagonal(std::slice::from_raw_parts(p, len));
        *out = observables::g3(&rho).ok_or_else(|| invalid("mean photon number below the g3 guard"))?;
        Ok(())
    })
}

/// Wigner function at `alpha = re + i im` for a `dim x dim` density matrix
/// given row-major as interleaved `(re, im)` pairs.
///
/// # Safety
/// `rho` must be valid for `2 * dim * dim` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_wigner_at(rho: *const f64, dim: usize, re: f64, im: f64, out: *mut f64) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        if rho.is_null() {
            return Err((OpoStatus::NullPointer, "null matrix".into()));
        }
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let raw = std::slice::from_raw_parts(rho, 2 * dim * dim);
        let data = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        let m = DensityMatrix::from_matrix(dim - 1, data);
        *out = observables::wigner_at(&m, C64::new(re, im)).map_err(run_error)?.re;
        Ok(())
    })
}

/// Reduced purity of the normalized perturbative polarization triplet.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opo_triplet_purity(chi: f64, k: f64, e0: f64, out: *mut f64) -> OpoStatus {
    guard(|| {
        let out = out_ref(out)?;
        let t = polarization::triplet_state(chi, k, e0, &FourModeDims::default()).map_err(run_error)?;
        let psi = t.normalized.ok_or_else(|| invalid("state vanishes"))?;
        *out = polarization::nonproduct_check(&psi).map_err(run_error)?;
        Ok(())
    })
}
