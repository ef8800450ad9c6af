//! C ABI over `hjlab`.
//!
//! Every fallible call returns an [`HjlabStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be fetched with [`hjlab_last_error_message`]. Handles are opaque and must
//! be released with the matching `_free` function; strings returned by the
//! library are released with [`hjlab_string_free`].

use hjlab::estimates::exponent_gate;
use hjlab::experiment::{parse_config, run_experiment, LoadedConfig, RunLedger, RunOptions};
use hjlab::grid::{lp_space_norm, ScalarField, TorusGrid, VectorField};
use hjlab::hamiltonian::PowerHamiltonian;
use hjlab::Error;
use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjlabStatus {
    Ok = 0,
    NullPointer = 1,
    /// Arguments inconsistent at the boundary (lengths, cell indices, UTF-8).
    InvalidInput = 2,
    /// Rejected by the library: bad exponents, grids, configs.
    Validation = 3,
    /// The numerics failed (CFL, non-finite values, quadrature budget, ...).
    Numerical = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
    BufferTooSmall = 7,
}

/// Hypothesis verdicts for a choice of exponents. Infinite exponents are
/// passed and returned as IEEE infinity.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HjlabGate {
    pub gamma: f64,
    pub gamma_prime: f64,
    pub d: size_t,
    pub q: f64,
    pub p_space: f64,
    pub q_time: f64,
    pub forcing_condition: bool,
    pub aronson_serrin: bool,
    pub apriori_condition: bool,
    pub apriori_threshold: f64,
    pub maximal_regularity_branch: bool,
    pub lipschitz_exponent: f64,
    pub trivial_interpolation: bool,
    pub r_prime: f64,
    pub embedding_p: f64,
}

/// Uniform periodic grid.
pub struct HjlabGrid(TorusGrid);

/// Cell-centred scalar field.
pub struct HjlabField(ScalarField);

/// `H(x, p) = h(x)|p|^γ + b(x)·p`.
pub struct HjlabHamiltonian(PowerHamiltonian);

/// Validated experiment configuration.
pub struct HjlabConfig(LoadedConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HjlabStatus {
    match e {
        Error::Io(_) => HjlabStatus::Io,
        e if e.is_validation() => HjlabStatus::Validation,
        _ => HjlabStatus::Numerical,
    }
}

struct Fail(HjlabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), format!("[{}] {e}", e.tag()))
    }
}

fn null(what: &str) -> Fail {
    Fail(HjlabStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HjlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HjlabStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HjlabStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(HjlabStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. Free with
/// [`hjlab_string_free`].
#[no_mangle]
pub extern "C" fn hjlab_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// # Safety
/// `s` must come from this library (or be null) and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hjlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must point to writable memory for one [`HjlabGate`].
#[no_mangle]
pub unsafe extern "C" fn hjlab_exponent_gate(
    gamma: f64,
    d: size_t,
    q: f64,
    p: f64,
    qt: f64,
    out: *mut HjlabGate,
) -> HjlabStatus {
    guard(|| {
        let g = exponent_gate(gamma, d, q, p, qt)?;
        let v = HjlabGate {
            gamma: g.gamma,
            gamma_prime: g.gamma_prime,
            d: g.d,
            q: g.q,
            p_space: g.p_space,
            q_time: g.q_time,
            forcing_condition: g.forcing_condition,
            aronson_serrin: g.aronson_serrin,
            apriori_condition: g.apriori_condition,
            apriori_threshold: g.apriori_threshold,
            maximal_regularity_branch: g.maximal_regularity_branch,
            lipschitz_exponent: g.lipschitz_exponent,
            trivial_interpolation: g.trivial_interpolation,
            r_prime: g.r_prime,
            embedding_p: g.embedding_p,
        };
        write(out, v, "out")
    })
}

/// # Safety
/// `out` must be a valid pointer; on success it receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn hjlab_grid_new(
    d: size_t,
    n: size_t,
    out: *mut *mut HjlabGrid,
) -> HjlabStatus {
    guard(|| {
        let g = TorusGrid::new(d, n)?;
        write(out, Box::into_raw(Box::new(HjlabGrid(g))), "out")
    })
}

/// # Safety
/// `g` must be a handle from [`hjlab_grid_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn hjlab_grid_free(g: *mut HjlabGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of cells, or 0 for a null handle.
///
/// # Safety
/// `g` must be a live grid handle or null.
#[no_mangle]
pub unsafe extern "C" fn hjlab_grid_len(g: *const HjlabGrid) -> size_t {
    g.as_ref().map_or(0, |g| g.0.len())
}

/// Copies `len` values (which must equal the cell count) into a new field.
///
/// # Safety
/// `values` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn hjlab_field_new(
    g: *const HjlabGrid,
    values: *const f64,
    len: size_t,
    out: *mut *mut HjlabField,
) -> HjlabStatus {
    guard(|| {
        let g = deref(g, "grid")?;
        if values.is_null() {
            return Err(null("values"));
        }
        if len != g.0.len() {
            return Err(Fail(
                HjlabStatus::InvalidInput,
                format!("expected {} values, got {len}", g.0.len()),
            ));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let f = ScalarField::new(g.0, v)?;
        write(out, Box::into_raw(Box::new(HjlabField(f))), "out")
    })
}

/// # Safety
/// `f` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn hjlab_field_free(f: *mut HjlabField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Copies the values into `buf`; fails with `BufferTooSmall` if `cap` is
/// less than the cell count.
///
/// # Safety
/// `buf` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hjlab_field_values(
    f: *const HjlabField,
    buf: *mut f64,
    cap: size_t,
) -> HjlabStatus {
    guard(|| {
        let f = deref(f, "field")?;
        let v = f.0.values();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < v.len() {
            return Err(Fail(
                HjlabStatus::BufferTooSmall,
                format!("need {} doubles, got {cap}", v.len()),
            ));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Discrete `L^p` norm over the torus (`p` may be infinity).
///
/// # Safety
/// `f` must be a live field handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hjlab_field_lp_norm(
    f: *const HjlabField,
    p: f64,
    out: *mut f64,
) -> HjlabStatus {
    guard(|| {
        let f = deref(f, "field")?;
        write(out, lp_space_norm(&f.0, p)?, "out")
    })
}

/// Spatially constant Hamiltonian `h|p|^γ + b·p`.
///
/// # Safety
/// `g` must be a live grid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hjlab_hamiltonian_new(
    g: *const HjlabGrid,
    gamma: f64,
    h: f64,
    b0: f64,
    b1: f64,
    out: *mut *mut HjlabHamiltonian,
) -> HjlabStatus {
    guard(|| {
        let g = deref(g, "grid")?;
        let ham = PowerHamiltonian::new(
            gamma,
            ScalarField::constant(g.0, h)?,
            VectorField::constant(g.0, [b0, b1])?,
        )?;
        write(out, Box::into_raw(Box::new(HjlabHamiltonian(ham))), "out")
    })
}

/// # Safety
/// `h` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn hjlab_hamiltonian_free(h: *mut HjlabHamiltonian) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// `H(x_cell, p)` including the nonnegativity shift.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hjlab_hamiltonian_eval(
    h: *const HjlabHamiltonian,
    cell: size_t,
    p0: f64,
    p1: f64,
    out: *mut f64,
) -> HjlabStatus {
    guard(|| {
        let h = deref(h, "hamiltonian")?;
        if cell >= h.0.grid().len() {
            return Err(Fail(
                HjlabStatus::InvalidInput,
                format!("cell {cell} out of range"),
            ));
        }
        write(out, h.0.eval_h(cell, [p0, p1]), "out")
    })
}

/// Legendre transform `L(x_cell, ν) = sup_p ν·p − H(x_cell, p)`.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hjlab_hamiltonian_legendre(
    h: *const HjlabHamiltonian,
    cell: size_t,
    nu0: f64,
    nu1: f64,
    out: *mut f64,
) -> HjlabStatus {
    guard(|| {
        let h = deref(h, "hamiltonian")?;
        if cell >= h.0.grid().len() {
            return Err(Fail(
                HjlabStatus::InvalidInput,
                format!("cell {cell} out of range"),
            ));
        }
        write(out, h.0.legendre(cell, [nu0, nu1]).value, "out")
    })
}

/// Parses and validates a config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hjlab_config_parse(
    path: *const c_char,
    out: *mut *mut HjlabConfig,
) -> HjlabStatus {
    guard(|| {
        let p = str_arg(path, "path")?;
        let c = parse_config(Path::new(p))?;
        write(out, Box::into_raw(Box::new(HjlabConfig(c))), "out")
    })
}

/// # Safety
/// `c` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn hjlab_config_free(c: *mut HjlabConfig) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Hex SHA-256 of the canonical config, or null. Free with
/// [`hjlab_string_free`].
///
/// # Safety
/// `c` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hjlab_config_hash(c: *const HjlabConfig) -> *mut c_char {
    c.as_ref()
        .map_or(ptr::null_mut(), |c| owned_string(c.0.hash.clone()))
}

/// The validated config, its gate and warnings as JSON. Free with
/// [`hjlab_string_free`].
///
/// # Safety
/// `c` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hjlab_config_to_json(
    c: *const HjlabConfig,
    out: *mut *mut c_char,
) -> HjlabStatus {
    guard(|| {
        let c = deref(c, "config")?;
        let v = serde_json::json!({
            "config": c.0.config,
            "hash": c.0.hash,
            "gate": c.0.gate,
            "warnings": c.0.warnings,
        });
        write(out, owned_string(v.to_string()), "out")
    })
}

/// Runs the experiment, appending rows to the JSON-lines ledger at
/// `ledger_path`. `failed` receives the number of failed members.
///
/// # Safety
/// `c` must be a live handle, `ledger_path` NUL-terminated, `failed`
/// writable or null.
#[no_mangle]
pub unsafe extern "C" fn hjlab_config_run(
    c: *const HjlabConfig,
    ledger_path: *const c_char,
    force: bool,
    failed: *mut size_t,
) -> HjlabStatus {
    guard(|| {
        let c = deref(c, "config")?;
        let p = str_arg(ledger_path, "ledger_path")?;
        let mut ledger = RunLedger::open(Path::new(p))?;
        let opts = RunOptions {
            force,
            timestamps: false,
            jobs: None,
        };
        let rows = run_experiment(&c.0, &opts, &mut ledger)?;
        if !failed.is_null() {
            failed.write(rows.iter().filter(|r| !r.is_ok()).count());
        }
        Ok(())
    })
}
