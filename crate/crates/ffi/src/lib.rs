//! C interface to the wall filter.
//!
//! A filter is created from a JSON run configuration and a calibration series,
//! then fed one measurement record at a time. All functions return an
//! [`EnmkfStatus`]; on failure the message of the most recent error on the
//! calling thread is available from [`enmkf_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use enmkf::data::MeasurementRecord;
use enmkf::experiment::{DiagnosticsRow, FilterRunner, RunConfig};
use enmkf::statespace::StateVector;
use enmkf::wall::{flux_observe, WallConfig};
use enmkf::{Error, ErrorKind};

/// Status codes. The numeric values of the error classes match the exit
/// codes of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnmkfStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
}

/// One measurement minute.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnmkfRecord {
    pub t_min: i64,
    pub t_int: f64,
    pub t_ext: f64,
    pub f_int: f64,
    pub f_ext: f64,
}

/// Ensemble summary after assimilating one record. Parameters are in
/// physical units; fluxes in W/m².
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnmkfEstimate {
    pub t_min: i64,
    pub r_mean: f64,
    pub r_std: f64,
    pub rho_c_mean: f64,
    pub rho_c_std: f64,
    pub f_int_mean: f64,
    pub f_ext_mean: f64,
    pub f_int_var: f64,
    pub f_ext_var: f64,
}

/// Opaque filter handle.
pub struct EnmkfFilter {
    runner: FilterRunner,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn fail(status: EnmkfStatus, msg: &str) -> EnmkfStatus {
    set_last_error(msg);
    status
}

fn from_error(e: &Error) -> EnmkfStatus {
    let status = match e.kind() {
        ErrorKind::Config => EnmkfStatus::Config,
        ErrorKind::Data => EnmkfStatus::Data,
        ErrorKind::Numerical => EnmkfStatus::Numerical,
    };
    fail(status, &e.to_string())
}

fn guarded(f: impl FnOnce() -> EnmkfStatus) -> EnmkfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == EnmkfStatus::Ok {
                set_last_error("");
            }
            status
        }
        Err(_) => fail(EnmkfStatus::Panic, "internal panic"),
    }
}

impl From<&EnmkfRecord> for MeasurementRecord {
    fn from(r: &EnmkfRecord) -> Self {
        MeasurementRecord {
            t_min: r.t_min,
            t_int: r.t_int,
            t_ext: r.t_ext,
            f_int: r.f_int,
            f_ext: r.f_ext,
        }
    }
}

impl From<DiagnosticsRow> for EnmkfEstimate {
    fn from(d: DiagnosticsRow) -> Self {
        EnmkfEstimate {
            t_min: d.t_min,
            r_mean: d.r_mean,
            r_std: d.r_std,
            rho_c_mean: d.rho_c_mean,
            rho_c_std: d.rho_c_std,
            f_int_mean: d.fint_mean,
            f_ext_mean: d.fext_mean,
            f_int_var: d.fint_var,
            f_ext_var: d.fext_var,
        }
    }
}

/// Creates a filter.
///
/// `config_json` is a NUL-terminated run configuration, or NULL for the
/// defaults. `calibration` points to `calibration_len` records; the first one
/// sets the initial temperatures and the series is used to estimate the
/// boundary-temperature process noise when configured to do so. The records
/// are not assimilated. On success `*out` receives a handle to release with
/// [`enmkf_filter_free`].
///
/// # Safety
/// `config_json` must be NULL or a valid C string, `calibration` must point to
/// `calibration_len` readable records and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn enmkf_filter_new(
    config_json: *const c_char,
    calibration: *const EnmkfRecord,
    calibration_len: usize,
    out: *mut *mut EnmkfFilter,
) -> EnmkfStatus {
    guarded(|| {
        if out.is_null() || calibration.is_null() {
            return fail(EnmkfStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            let text = match CStr::from_ptr(config_json).to_str() {
                Ok(t) => t,
                Err(_) => return fail(EnmkfStatus::Config, "configuration is not valid UTF-8"),
            };
            match RunConfig::from_json_str(text) {
                Ok(c) => c,
                Err(e) => return from_error(&e),
            }
        };
        let records: Vec<MeasurementRecord> =
            std::slice::from_raw_parts(calibration, calibration_len)
                .iter()
                .map(MeasurementRecord::from)
                .collect();
        match FilterRunner::new(&cfg, &records) {
            Ok(runner) => {
                *out = Box::into_raw(Box::new(EnmkfFilter { runner }));
                EnmkfStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Assimilates one record and writes the resulting summary to `*estimate`.
///
/// # Safety
/// `filter` must come from [`enmkf_filter_new`]; `record` and `estimate` must
/// be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn enmkf_filter_step(
    filter: *mut EnmkfFilter,
    record: *const EnmkfRecord,
    estimate: *mut EnmkfEstimate,
) -> EnmkfStatus {
    guarded(|| {
        if filter.is_null() || record.is_null() || estimate.is_null() {
            return fail(EnmkfStatus::NullPointer, "null argument");
        }
        let f = &mut *filter;
        let rec = MeasurementRecord::from(&*record);
        if ![rec.t_int, rec.t_ext, rec.f_int, rec.f_ext]
            .iter()
            .all(|v| v.is_finite())
        {
            return fail(EnmkfStatus::Data, "record contains non-finite values");
        }
        match f.runner.assimilate(&rec) {
            Ok(row) => {
                *estimate = row.into();
                EnmkfStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Ensemble size of the filter, or 0 for NULL.
///
/// # Safety
/// `filter` must be NULL or come from [`enmkf_filter_new`].
#[no_mangle]
pub unsafe extern "C" fn enmkf_filter_ensemble_size(filter: *const EnmkfFilter) -> usize {
    if filter.is_null() {
        0
    } else {
        (*filter).runner.ensemble().size()
    }
}

/// Releases a filter. NULL is ignored.
///
/// # Safety
/// `filter` must be NULL or come from [`enmkf_filter_new`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn enmkf_filter_free(filter: *mut EnmkfFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Boundary fluxes `(F_int, F_ext)` of a node temperature profile
/// `[T_int, T_1, ..., T_ext]` of length `n_nodes` for thermal resistance `r`.
///
/// # Safety
/// `nodes` must point to `n_nodes` readable values; `f_int` and `f_ext` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn enmkf_wall_flux(
    nodes: *const f64,
    n_nodes: usize,
    r: f64,
    f_int: *mut f64,
    f_ext: *mut f64,
) -> EnmkfStatus {
    guarded(|| {
        if nodes.is_null() || f_int.is_null() || f_ext.is_null() {
            return fail(EnmkfStatus::NullPointer, "null argument");
        }
        if !(r > 0.0 && r.is_finite()) {
            return fail(EnmkfStatus::Config, "thermal resistance must be positive");
        }
        let cfg = WallConfig {
            n_cells: n_nodes.saturating_sub(1),
            ..WallConfig::default()
        };
        if let Err(e) = cfg.validate() {
            return from_error(&e);
        }
        let state = StateVector::from_slice(std::slice::from_raw_parts(nodes, n_nodes));
        let (a, b) = flux_observe(&state, r, &cfg);
        *f_int = a;
        *f_ext = b;
        EnmkfStatus::Ok
    })
}

/// Message of the last error on this thread; empty after a success. The
/// pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn enmkf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn enmkf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
