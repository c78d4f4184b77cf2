//! C interface to the spde-fk solver.
//!
//! Handles are opaque and owned by the caller once returned; each has a
//! matching `_free`. Every fallible call returns an [`SpdeFkStatus`] and
//! leaves a message for [`spde_fk_last_error`] on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spde_fk::error::Error;
use spde_fk::experiments::{run_validation, ValidationOptions, ValidationReport};
use spde_fk::noise::{NoisePlan, StreamId};
use spde_fk::reference::{fd_solve, Boundary, FdOptions, SpaceGrid};
use spde_fk::representation::{estimate_v, EstimatorOptions, Query, RepresentationEstimate};
use spde_fk::scenario::{load_scenario, ScenarioConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdeFkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Assumption = 5,
    Numerical = 6,
    Io = 7,
    Index = 8,
    Panic = 9,
}

impl From<&Error> for SpdeFkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse(_) => SpdeFkStatus::Parse,
            Error::Assumption(_) => SpdeFkStatus::Assumption,
            Error::Index(_) => SpdeFkStatus::Index,
            Error::Io(_) => SpdeFkStatus::Io,
            e if e.is_numerical() => SpdeFkStatus::Numerical,
            _ => SpdeFkStatus::Validation,
        }
    }
}

/// A parsed and validated scenario.
pub struct SpdeFkScenario {
    config: ScenarioConfig,
}

/// Estimates of v at a set of query points.
pub struct SpdeFkEstimates {
    estimates: Vec<RepresentationEstimate>,
}

/// A pathwise comparison of estimates with the finite-difference solution.
pub struct SpdeFkValidation {
    report: ValidationReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(e: Error) -> SpdeFkStatus {
    let status = SpdeFkStatus::from(&e);
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> SpdeFkStatus) -> SpdeFkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic inside spde-fk");
            SpdeFkStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, SpdeFkStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(SpdeFkStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        SpdeFkStatus::InvalidUtf8
    })
}

fn boxed<T>(value: T, out: *mut *mut T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

fn null_out<T>(out: *mut *mut T) -> Option<SpdeFkStatus> {
    if out.is_null() {
        set_error("null output pointer");
        return Some(SpdeFkStatus::NullPointer);
    }
    // SAFETY: checked non-null above.
    unsafe { *out = ptr::null_mut() };
    None
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spde_fk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn spde_fk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_parse(toml: *const c_char, out: *mut *mut SpdeFkScenario) -> SpdeFkStatus {
    guard(|| {
        if let Some(s) = null_out(out) {
            return s;
        }
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match load_scenario(text) {
            Ok(config) => {
                boxed(SpdeFkScenario { config }, out);
                SpdeFkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_load(path: *const c_char, out: *mut *mut SpdeFkScenario) -> SpdeFkStatus {
    guard(|| {
        if let Some(s) = null_out(out) {
            return s;
        }
        let path = match read_str(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_file(Path::new(path)) {
            Ok(config) => {
                boxed(SpdeFkScenario { config }, out);
                SpdeFkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_free(scenario: *mut SpdeFkScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

unsafe fn scenario_mut<'a>(s: *mut SpdeFkScenario) -> Result<&'a mut ScenarioConfig, SpdeFkStatus> {
    if s.is_null() {
        set_error("null scenario handle");
        return Err(SpdeFkStatus::NullPointer);
    }
    Ok(&mut (*s).config)
}

/// # Safety
/// `scenario` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_set_seed(scenario: *mut SpdeFkScenario, seed: u64) -> SpdeFkStatus {
    guard(|| match scenario_mut(scenario) {
        Ok(cfg) => {
            cfg.seed = seed;
            SpdeFkStatus::Ok
        }
        Err(s) => s,
    })
}

/// # Safety
/// `scenario` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_set_samples(scenario: *mut SpdeFkScenario, samples: usize) -> SpdeFkStatus {
    guard(|| match scenario_mut(scenario) {
        Ok(cfg) => {
            let old = cfg.samples;
            cfg.samples = samples;
            if let Err(e) = cfg.validate() {
                cfg.samples = old;
                return fail(e);
            }
            SpdeFkStatus::Ok
        }
        Err(s) => s,
    })
}

/// Spatial dimension, or 0 for a NULL handle.
///
/// # Safety
/// `scenario` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_dim(scenario: *const SpdeFkScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.config.dim())
}

/// Number of time steps of the scenario grid, or 0 for a NULL handle.
///
/// # Safety
/// `scenario` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_steps(scenario: *const SpdeFkScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.config.grid().n_steps())
}

/// Final time, or NaN for a NULL handle.
///
/// # Safety
/// `scenario` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_scenario_t_final(scenario: *const SpdeFkScenario) -> f64 {
    scenario.as_ref().map_or(f64::NAN, |s| s.config.grid().t_final())
}

unsafe fn points<'a>(cfg: &ScenarioConfig, xs: *const f64, n_points: usize) -> Result<&'a [f64], SpdeFkStatus> {
    if xs.is_null() && n_points > 0 {
        set_error("null point array");
        return Err(SpdeFkStatus::NullPointer);
    }
    if n_points == 0 {
        return Ok(&[]);
    }
    Ok(std::slice::from_raw_parts(xs, n_points * cfg.dim()))
}

/// Monte Carlo estimates of v at time node `node` (0 means the final node)
/// for the w path with index `path`. `xs` holds `n_points` points of
/// dimension `spde_fk_scenario_dim`, row-major.
///
/// # Safety
/// `xs` must point to `n_points * dim` doubles, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_estimate(
    scenario: *const SpdeFkScenario,
    path: u64,
    node: usize,
    xs: *const f64,
    n_points: usize,
    out: *mut *mut SpdeFkEstimates,
) -> SpdeFkStatus {
    guard(|| {
        if let Some(s) = null_out(out) {
            return s;
        }
        let Some(scenario) = scenario.as_ref() else {
            set_error("null scenario handle");
            return SpdeFkStatus::NullPointer;
        };
        let cfg = &scenario.config;
        let xs = match points(cfg, xs, n_points) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let run = || -> spde_fk::error::Result<Vec<RepresentationEstimate>> {
            let grid = cfg.grid();
            let node = if node == 0 { grid.n_steps() } else { node };
            let w = NoisePlan::new(cfg.seed).sample_w(&grid, cfg.modes, StreamId::W(path));
            let field = cfg.coefficient_set()?.realize(&w);
            let queries: Vec<Query> = xs
                .chunks(cfg.dim())
                .map(|x| Query { node, x: x.to_vec() })
                .collect();
            let opts = EstimatorOptions {
                samples: cfg.samples,
                tolerance: cfg.inversion_tolerance,
                exit: cfg.exit_detection,
                master_seed: cfg.seed,
                path_index: path,
                ..EstimatorOptions::default()
            };
            estimate_v(&cfg.domain, &field, &w, &queries, &opts)
        };
        match run() {
            Ok(estimates) => {
                boxed(SpdeFkEstimates { estimates }, out);
                SpdeFkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of estimates, or 0 for a NULL handle.
///
/// # Safety
/// `estimates` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_estimates_len(estimates: *const SpdeFkEstimates) -> usize {
    estimates.as_ref().map_or(0, |e| e.estimates.len())
}

/// Mean, standard error and largest inversion residual of estimate `i`.
/// Any of the output pointers may be NULL.
///
/// # Safety
/// `estimates` must be a valid handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_estimates_get(
    estimates: *const SpdeFkEstimates,
    i: usize,
    mean: *mut f64,
    stderr: *mut f64,
    residual: *mut f64,
) -> SpdeFkStatus {
    guard(|| {
        let Some(est) = estimates.as_ref() else {
            set_error("null estimates handle");
            return SpdeFkStatus::NullPointer;
        };
        let Some(e) = est.estimates.get(i) else {
            set_error(format!("estimate {i} out of {}", est.estimates.len()));
            return SpdeFkStatus::Index;
        };
        for (p, v) in [(mean, e.mean), (stderr, e.stderr), (residual, e.max_residual)] {
            if !p.is_null() {
                *p = v;
            }
        }
        SpdeFkStatus::Ok
    })
}

/// # Safety
/// `estimates` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_estimates_free(estimates: *mut SpdeFkEstimates) {
    if !estimates.is_null() {
        drop(Box::from_raw(estimates));
    }
}

/// Finite-difference solution at the final time on the scenario's space grid
/// for the w path with index `path`, read at `n_points` grid nodes.
///
/// # Safety
/// `xs` must point to `n_points * dim` doubles and `values` to `n_points`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_reference(
    scenario: *const SpdeFkScenario,
    path: u64,
    xs: *const f64,
    n_points: usize,
    values: *mut f64,
) -> SpdeFkStatus {
    guard(|| {
        let Some(scenario) = scenario.as_ref() else {
            set_error("null scenario handle");
            return SpdeFkStatus::NullPointer;
        };
        if values.is_null() && n_points > 0 {
            set_error("null output array");
            return SpdeFkStatus::NullPointer;
        }
        let cfg = &scenario.config;
        let xs = match points(cfg, xs, n_points) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let run = || -> spde_fk::error::Result<Vec<f64>> {
            let grid = cfg.grid();
            let w = NoisePlan::new(cfg.seed).sample_w(&grid, cfg.modes, StreamId::W(path));
            let field = cfg.coefficient_set()?.realize(&w);
            let space = SpaceGrid::new(cfg.domain.clone(), cfg.space_cells)?;
            let opts = FdOptions {
                k: cfg.constants.k,
                ..FdOptions::default()
            };
            let u = fd_solve(&field, &w, &space, Boundary::DirichletZero, &opts)?;
            xs.chunks(cfg.dim())
                .map(|x| u.value_at(grid.n_steps(), x))
                .collect()
        };
        match run() {
            Ok(v) => {
                if n_points > 0 {
                    std::slice::from_raw_parts_mut(values, n_points).copy_from_slice(&v);
                }
                SpdeFkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the pathwise validation over `paths` w paths with a `lattice`-point
/// query lattice per axis.
///
/// # Safety
/// `scenario` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_validate(
    scenario: *const SpdeFkScenario,
    paths: usize,
    lattice: usize,
    out: *mut *mut SpdeFkValidation,
) -> SpdeFkStatus {
    guard(|| {
        if let Some(s) = null_out(out) {
            return s;
        }
        let Some(scenario) = scenario.as_ref() else {
            set_error("null scenario handle");
            return SpdeFkStatus::NullPointer;
        };
        let opts = ValidationOptions {
            paths,
            samples: scenario.config.samples,
            lattice,
            node: None,
        };
        match run_validation(&scenario.config, &opts) {
            Ok(report) => {
                boxed(SpdeFkValidation { report }, out);
                SpdeFkStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Largest relative L2 error over the paths, or NaN for a NULL handle.
///
/// # Safety
/// `validation` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_validation_max_relative_l2(validation: *const SpdeFkValidation) -> f64 {
    validation.as_ref().map_or(f64::NAN, |v| v.report.max_relative_l2())
}

/// 1 when every path is within `tolerance` (relative L2) or within its
/// Monte Carlo band, 0 otherwise or for a NULL handle.
///
/// # Safety
/// `validation` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_validation_passed(validation: *const SpdeFkValidation, tolerance: f64) -> i32 {
    validation.as_ref().map_or(0, |v| i32::from(v.report.passed(tolerance)))
}

/// # Safety
/// `validation` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn spde_fk_validation_free(validation: *mut SpdeFkValidation) {
    if !validation.is_null() {
        drop(Box::from_raw(validation));
    }
}
