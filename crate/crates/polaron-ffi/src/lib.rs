//! C ABI for the polaron simulation library.
//!
//! All functions are `extern "C"`, take and return only C-compatible types,
//! and never unwind across the boundary. Objects are created and destroyed
//! through opaque handles; every fallible call returns a [`PolaronStatus`]
//! code, and a human-readable description of the most recent failure on the
//! calling thread is available via [`polaron_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use polaron::eigen::GroundStateSummary;
use polaron::run::{
    render_ground_summary, render_time_series, run_ground, run_quench, QuenchOutcome, RunConfig,
};

/// Status codes returned by every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolaronStatus {
    /// Operation completed.
    PolaronOk = 0,
    /// A required pointer argument was null.
    PolaronErrNullArgument = 1,
    /// A string argument was not valid UTF-8.
    PolaronErrInvalidUtf8 = 2,
    /// Configuration rejected (unknown key, bad value, or failed validation).
    PolaronErrConfig = 3,
    /// The computation itself failed (solver or model error).
    PolaronErrCompute = 4,
    /// File input/output failed.
    PolaronErrIo = 5,
    /// An index argument was out of range.
    PolaronErrIndex = 6,
    /// The requested quantity was not reached during the run.
    PolaronErrNotReached = 7,
    /// Internal panic; the handle remains valid but the call had no effect.
    PolaronErrInternal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: impl AsRef<str>) {
    let sanitized: String = msg
        .as_ref()
        .chars()
        .map(|c| if c == '\0' { ' ' } else { c })
        .collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Pointer to a NUL-terminated description of the most recent error on the
/// calling thread. Owned by the library; valid until the next failing call on
/// the same thread. Never null.
#[no_mangle]
pub extern "C" fn polaron_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Opaque run-configuration handle.
pub struct PolaronConfig {
    inner: RunConfig,
}

/// Opaque quench-outcome handle.
pub struct PolaronQuench {
    inner: QuenchOutcome,
}

/// Opaque ground-state-summary handle.
pub struct PolaronGround {
    inner: GroundStateSummary,
}

/// One recorded observable row of a quench run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolaronRecord {
    pub time_ns: f64,
    pub time_tau: f64,
    pub n_ph: f64,
    pub survival: f64,
    pub s_x: f64,
    pub s_p: f64,
    pub entropy: f64,
    pub norm: f64,
}

/// Per-momentum-sector ground-state data.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolaronSectorGround {
    pub k_index: usize,
    pub k_value: f64,
    pub energy: f64,
    pub n_ph: f64,
    pub residue: f64,
}

fn guarded(body: impl FnOnce() -> PolaronStatus) -> PolaronStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unidentified panic".to_string());
            set_last_error(format!("internal panic: {msg}"));
            PolaronStatus::PolaronErrInternal
        }
    }
}

/// # Safety
/// `ptr` must be non-null and point to a NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, PolaronStatus> {
    if ptr.is_null() {
        set_last_error("null string argument");
        return Err(PolaronStatus::PolaronErrNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("string argument is not valid UTF-8");
        PolaronStatus::PolaronErrInvalidUtf8
    })
}

/// Creates a configuration populated with the default production preset.
/// Free with [`polaron_config_free`]. Returns null only on internal failure.
#[no_mangle]
pub extern "C" fn polaron_config_new() -> *mut PolaronConfig {
    Box::into_raw(Box::new(PolaronConfig {
        inner: RunConfig::default(),
    }))
}

/// Loads a configuration from a flat `key = value` file, writing the new
/// handle through `out` on success.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polaron_config_from_file(
    path: *const c_char,
    out: *mut *mut PolaronConfig,
) -> PolaronStatus {
    guarded(|| {
        if out.is_null() {
            set_last_error("null output pointer");
            return PolaronStatus::PolaronErrNullArgument;
        }
        let path = match read_str(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match RunConfig::from_file(Path::new(path)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(PolaronConfig { inner: cfg }));
                PolaronStatus::PolaronOk
            }
            Err(e) => {
                set_last_error(e.to_string());
                PolaronStatus::PolaronErrConfig
            }
        }
    })
}

/// Overrides one configuration field by key name (same keys as the config
/// file, e.g. `"max_phonons"`, `"phi_dc_over_pi"`).
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn polaron_config_set(
    cfg: *mut PolaronConfig,
    key: *const c_char,
    value: *const c_char,
) -> PolaronStatus {
    guarded(|| {
        if cfg.is_null() {
            set_last_error("null config handle");
            return PolaronStatus::PolaronErrNullArgument;
        }
        let (key, value) = match (read_str(key), read_str(value)) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match (*cfg).inner.set(key, value) {
            Ok(()) => PolaronStatus::PolaronOk,
            Err(e) => {
                set_last_error(e.to_string());
                PolaronStatus::PolaronErrConfig
            }
        }
    })
}

/// Validates the configuration without running anything.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_config_validate(cfg: *const PolaronConfig) -> PolaronStatus {
    guarded(|| {
        if cfg.is_null() {
            set_last_error("null config handle");
            return PolaronStatus::PolaronErrNullArgument;
        }
        match (*cfg).inner.validate() {
            Ok(()) => PolaronStatus::PolaronOk,
            Err(e) => {
                set_last_error(e.to_string());
                PolaronStatus::PolaronErrConfig
            }
        }
    })
}

/// Releases a configuration handle. Null is ignored.
///
/// # Safety
/// `cfg` must be a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn polaron_config_free(cfg: *mut PolaronConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the interaction quench described by `cfg`, writing a new outcome
/// handle through `out` on success.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_run(
    cfg: *const PolaronConfig,
    out: *mut *mut PolaronQuench,
) -> PolaronStatus {
    guarded(|| {
        if cfg.is_null() || out.is_null() {
            set_last_error("null argument");
            return PolaronStatus::PolaronErrNullArgument;
        }
        match run_quench(&(*cfg).inner) {
            Ok(outcome) => {
                *out = Box::into_raw(Box::new(PolaronQuench { inner: outcome }));
                PolaronStatus::PolaronOk
            }
            Err(e) => {
                set_last_error(e.to_string());
                PolaronStatus::PolaronErrCompute
            }
        }
    })
}

/// Number of recorded observable rows in a quench outcome.
///
/// # Safety
/// `quench` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_num_records(quench: *const PolaronQuench) -> usize {
    if quench.is_null() {
        return 0;
    }
    (*quench).inner.records.len()
}

/// Copies recorded row `index` into `record`.
///
/// # Safety
/// `quench` must be a live handle and `record` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_record(
    quench: *const PolaronQuench,
    index: usize,
    record: *mut PolaronRecord,
) -> PolaronStatus {
    guarded(|| {
        if quench.is_null() || record.is_null() {
            set_last_error("null argument");
            return PolaronStatus::PolaronErrNullArgument;
        }
        let records = &(*quench).inner.records;
        match records.get(index) {
            Some(r) => {
                *record = PolaronRecord {
                    time_ns: r.time_ns,
                    time_tau: r.time_tau,
                    n_ph: r.n_ph,
                    survival: r.survival,
                    s_x: r.s_x,
                    s_p: r.s_p,
                    entropy: r.entropy,
                    norm: r.norm,
                };
                PolaronStatus::PolaronOk
            }
            None => {
                set_last_error(format!(
                    "record index {index} out of range (len {})",
                    records.len()
                ));
                PolaronStatus::PolaronErrIndex
            }
        }
    })
}

/// Writes the formation time in units of the hopping time through `out`.
/// Returns `PolaronErrNotReached` when dressing never reached the reference
/// phonon number during the run.
///
/// # Safety
/// `quench` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_formation_time(
    quench: *const PolaronQuench,
    out: *mut f64,
) -> PolaronStatus {
    guarded(|| {
        if quench.is_null() || out.is_null() {
            set_last_error("null argument");
            return PolaronStatus::PolaronErrNullArgument;
        }
        match (*quench).inner.tau_sp_tau {
            Some(tau) => {
                *out = tau;
                PolaronStatus::PolaronOk
            }
            None => {
                set_last_error("formation time not reached within the simulated window");
                PolaronStatus::PolaronErrNotReached
            }
        }
    })
}

/// Ground-state weight of the initial bare state (quasiparticle residue of
/// the reference ground state). NaN for a null handle.
///
/// # Safety
/// `quench` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_ground_weight(quench: *const PolaronQuench) -> f64 {
    if quench.is_null() {
        return f64::NAN;
    }
    (*quench).inner.ground_weight
}

/// Reference ground-state phonon number behind the formation-time detector.
/// NaN for a null handle.
///
/// # Safety
/// `quench` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_reference_phonon_number(
    quench: *const PolaronQuench,
) -> f64 {
    if quench.is_null() {
        return f64::NAN;
    }
    (*quench).inner.n_bar_reference
}

/// Largest deviation of the state norm from one across all steps. NaN for a
/// null handle.
///
/// # Safety
/// `quench` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_max_norm_drift(quench: *const PolaronQuench) -> f64 {
    if quench.is_null() {
        return f64::NAN;
    }
    (*quench).inner.max_norm_drift
}

/// Writes the quench time series as CSV (with JSON metadata header) to `path`.
///
/// # Safety
/// `cfg` and `quench` must be live handles; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_write_csv(
    cfg: *const PolaronConfig,
    quench: *const PolaronQuench,
    path: *const c_char,
) -> PolaronStatus {
    guarded(|| {
        if cfg.is_null() || quench.is_null() {
            set_last_error("null handle");
            return PolaronStatus::PolaronErrNullArgument;
        }
        let path = match read_str(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let body = render_time_series(&(*cfg).inner, &(*quench).inner);
        match std::fs::write(path, body) {
            Ok(()) => PolaronStatus::PolaronOk,
            Err(e) => {
                set_last_error(e.to_string());
                PolaronStatus::PolaronErrIo
            }
        }
    })
}

/// Releases a quench-outcome handle. Null is ignored.
///
/// # Safety
/// `quench` must be a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn polaron_quench_free(quench: *mut PolaronQuench) {
    if !quench.is_null() {
        drop(Box::from_raw(quench));
    }
}

/// Solves the per-sector ground states described by `cfg`, writing a new
/// summary handle through `out` on success.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_run(
    cfg: *const PolaronConfig,
    out: *mut *mut PolaronGround,
) -> PolaronStatus {
    guarded(|| {
        if cfg.is_null() || out.is_null() {
            set_last_error("null argument");
            return PolaronStatus::PolaronErrNullArgument;
        }
        match run_ground(&(*cfg).inner) {
            Ok(summary) => {
                *out = Box::into_raw(Box::new(PolaronGround { inner: summary }));
                PolaronStatus::PolaronOk
            }
            Err(e) => {
                set_last_error(e.to_string());
                PolaronStatus::PolaronErrCompute
            }
        }
    })
}

/// Number of momentum sectors in a ground-state summary.
///
/// # Safety
/// `ground` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_num_sectors(ground: *const PolaronGround) -> usize {
    if ground.is_null() {
        return 0;
    }
    (*ground).inner.sectors.len()
}

/// Copies sector `index` of the summary into `sector`.
///
/// # Safety
/// `ground` must be a live handle and `sector` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_sector(
    ground: *const PolaronGround,
    index: usize,
    sector: *mut PolaronSectorGround,
) -> PolaronStatus {
    guarded(|| {
        if ground.is_null() || sector.is_null() {
            set_last_error("null argument");
            return PolaronStatus::PolaronErrNullArgument;
        }
        let sectors = &(*ground).inner.sectors;
        match sectors.get(index) {
            Some(s) => {
                *sector = PolaronSectorGround {
                    k_index: s.k_index,
                    k_value: s.k_value,
                    energy: s.e_min,
                    n_ph: s.phonon_number,
                    residue: s.residue,
                };
                PolaronStatus::PolaronOk
            }
            None => {
                set_last_error(format!(
                    "sector index {index} out of range (len {})",
                    sectors.len()
                ));
                PolaronStatus::PolaronErrIndex
            }
        }
    })
}

/// Momentum index of the global ground state. `usize::MAX` for a null handle.
///
/// # Safety
/// `ground` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_k_gs_index(ground: *const PolaronGround) -> usize {
    if ground.is_null() {
        return usize::MAX;
    }
    (*ground).inner.k_gs_index
}

/// Global ground-state energy in rad/ns. NaN for a null handle.
///
/// # Safety
/// `ground` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_energy(ground: *const PolaronGround) -> f64 {
    if ground.is_null() {
        return f64::NAN;
    }
    (*ground).inner.energy
}

/// Global ground-state phonon number. NaN for a null handle.
///
/// # Safety
/// `ground` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_phonon_number(ground: *const PolaronGround) -> f64 {
    if ground.is_null() {
        return f64::NAN;
    }
    (*ground).inner.phonon_number
}

/// Global ground-state quasiparticle residue. NaN for a null handle.
///
/// # Safety
/// `ground` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_residue(ground: *const PolaronGround) -> f64 {
    if ground.is_null() {
        return f64::NAN;
    }
    (*ground).inner.residue
}

/// Writes the ground-state summary as pretty-printed JSON to `path`.
///
/// # Safety
/// `cfg` and `ground` must be live handles; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_write_json(
    cfg: *const PolaronConfig,
    ground: *const PolaronGround,
    path: *const c_char,
) -> PolaronStatus {
    guarded(|| {
        if cfg.is_null() || ground.is_null() {
            set_last_error("null handle");
            return PolaronStatus::PolaronErrNullArgument;
        }
        let path = match read_str(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let body = render_ground_summary(&(*cfg).inner, &(*ground).inner);
        match std::fs::write(path, body) {
            Ok(()) => PolaronStatus::PolaronOk,
            Err(e) => {
                set_last_error(e.to_string());
                PolaronStatus::PolaronErrIo
            }
        }
    })
}

/// Releases a ground-state-summary handle. Null is ignored.
///
/// # Safety
/// `ground` must be a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn polaron_ground_free(ground: *mut PolaronGround) {
    if !ground.is_null() {
        drop(Box::from_raw(ground));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn config_roundtrip_and_errors() {
        let cfg = polaron_config_new();
        assert!(!cfg.is_null());
        unsafe {
            assert_eq!(
                polaron_config_set(cfg, c("max_phonons").as_ptr(), c("4").as_ptr()),
                PolaronStatus::PolaronOk
            );
            assert_eq!(
                polaron_config_set(cfg, c("no_such_key").as_ptr(), c("1").as_ptr()),
                PolaronStatus::PolaronErrConfig
            );
            let msg = CStr::from_ptr(polaron_last_error_message());
            assert!(msg.to_str().unwrap().contains("no_such_key"));
            assert_eq!(polaron_config_validate(cfg), PolaronStatus::PolaronOk);
            assert_eq!(
                polaron_config_set(cfg, c("k0_index").as_ptr(), c("99").as_ptr()),
                PolaronStatus::PolaronOk
            );
            assert_eq!(polaron_config_validate(cfg), PolaronStatus::PolaronErrConfig);
            polaron_config_free(cfg);
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(
                polaron_config_set(
                    std::ptr::null_mut(),
                    c("n_sites").as_ptr(),
                    c("4").as_ptr()
                ),
                PolaronStatus::PolaronErrNullArgument
            );
            let mut out: *mut PolaronQuench = std::ptr::null_mut();
            assert_eq!(
                polaron_quench_run(std::ptr::null(), &mut out),
                PolaronStatus::PolaronErrNullArgument
            );
            assert_eq!(polaron_quench_num_records(std::ptr::null()), 0);
            assert!(polaron_quench_ground_weight(std::ptr::null()).is_nan());
            polaron_quench_free(std::ptr::null_mut());
            polaron_config_free(std::ptr::null_mut());
            polaron_ground_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn small_quench_through_ffi() {
        let cfg = polaron_config_new();
        unsafe {
            for (k, v) in [
                ("n_sites", "5"),
                ("max_phonons", "3"),
                ("reference_max_phonons", "3"),
                ("k0_index", "1"),
                ("t_final_tau", "2.0"),
                ("dt_tau", "0.1"),
            ] {
                assert_eq!(
                    polaron_config_set(cfg, c(k).as_ptr(), c(v).as_ptr()),
                    PolaronStatus::PolaronOk
                );
            }
            let mut q: *mut PolaronQuench = std::ptr::null_mut();
            assert_eq!(polaron_quench_run(cfg, &mut q), PolaronStatus::PolaronOk);
            let n = polaron_quench_num_records(q);
            assert_eq!(n, 21);
            let mut rec = PolaronRecord {
                time_ns: 0.0,
                time_tau: 0.0,
                n_ph: 0.0,
                survival: 0.0,
                s_x: 0.0,
                s_p: 0.0,
                entropy: 0.0,
                norm: 0.0,
            };
            assert_eq!(polaron_quench_record(q, 0, &mut rec), PolaronStatus::PolaronOk);
            assert!((rec.survival - 1.0).abs() < 1e-12);
            assert!(rec.entropy.abs() < 1e-10);
            assert_eq!(
                polaron_quench_record(q, n, &mut rec),
                PolaronStatus::PolaronErrIndex
            );
            assert!(polaron_quench_max_norm_drift(q) < 1e-8);
            let w = polaron_quench_ground_weight(q);
            assert!(w > 0.0 && w <= 1.0);
            polaron_quench_free(q);
            polaron_config_free(cfg);
        }
    }

    #[test]
    fn small_ground_through_ffi() {
        let cfg = polaron_config_new();
        unsafe {
            for (k, v) in [("n_sites", "4"), ("max_phonons", "2")] {
                assert_eq!(
                    polaron_config_set(cfg, c(k).as_ptr(), c(v).as_ptr()),
                    PolaronStatus::PolaronOk
                );
            }
            let mut g: *mut PolaronGround = std::ptr::null_mut();
            assert_eq!(polaron_ground_run(cfg, &mut g), PolaronStatus::PolaronOk);
            let n = polaron_ground_num_sectors(g);
            assert!(n >= 1);
            let mut sector = PolaronSectorGround {
                k_index: 0,
                k_value: 0.0,
                energy: 0.0,
                n_ph: 0.0,
                residue: 0.0,
            };
            assert_eq!(
                polaron_ground_sector(g, 0, &mut sector),
                PolaronStatus::PolaronOk
            );
            assert!(sector.energy <= 0.0);
            assert!(polaron_ground_energy(g) <= sector.energy + 1e-12);
            assert_eq!(
                polaron_ground_sector(g, n, &mut sector),
                PolaronStatus::PolaronErrIndex
            );
            polaron_ground_free(g);
            polaron_config_free(cfg);
        }
    }
}
