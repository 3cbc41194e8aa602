//! C interface to `invpulse`.
//!
//! Objects are opaque handles created by `*_new`-style functions and released
//! with the matching `*_free`. Every fallible function returns an
//! [`InvpulseStatus`]; on failure the message is available from
//! [`invpulse_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use invpulse::config::RunConfig;
use invpulse::dynamics::{ensemble_transfer, DensityState, ModelBundle, PropagationSettings};
use invpulse::invariant::{
    reverse_pulses, synthesize_samples, verify_invariant_condition, AnsatzCoefficients, InvariantSpec,
    SampledPulsePair, Table1Case, CONSTRAINT_TOLERANCE,
};
use invpulse::levels::{DecoherenceSpec, EnsembleSpec, GroundLevel, LevelSystem};
use invpulse::protocol::{extract_pair_fidelity, overall_fidelities, ExtractionBasis, PopulationPulses, PopulationReadout};
use invpulse::Error;

/// Result of every fallible call. Codes 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvpulseStatus {
    Ok = 0,
    /// Bad argument, configuration or input document.
    Invalid = 2,
    /// Integration, positivity or fit failure.
    Numerical = 3,
    /// Coefficients violate an endpoint condition.
    Constraint = 4,
    NullPointer = 5,
    /// Output buffer shorter than required.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Ground level, numbered as in the library's six-level basis.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvpulseGround {
    Aux = 0,
    One = 1,
    Zero = 2,
}

fn ground(code: u32) -> Result<GroundLevel, Fail> {
    match code {
        c if c == InvpulseGround::Aux as u32 => Ok(GroundLevel::Aux),
        c if c == InvpulseGround::One as u32 => Ok(GroundLevel::One),
        c if c == InvpulseGround::Zero as u32 => Ok(GroundLevel::Zero),
        c => Err(Fail::Status(InvpulseStatus::Invalid, format!("no ground level {c}"))),
    }
}

/// Coefficients of one pulse pair.
pub struct InvpulseCoefficients(AnsatzCoefficients);

/// Sampled envelopes of one pulse pair.
pub struct InvpulsePulses(SampledPulsePair);

/// Level system, decoherence, ensemble and integrator settings.
pub struct InvpulseModel(ModelBundle);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> InvpulseStatus {
    match e {
        Error::Constraint { .. } => InvpulseStatus::Constraint,
        e if e.is_numerical() => InvpulseStatus::Numerical,
        _ => InvpulseStatus::Invalid,
    }
}

enum Fail {
    Lib(Error),
    Status(InvpulseStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(InvpulseStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status and the last-error message.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> InvpulseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => InvpulseStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            InvpulseStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn invpulse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn invpulse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Published coefficients: `case` is 1, 2 or 3. Endpoint conditions are
/// re-solved exactly from the first six coefficients.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn invpulse_coefficients_table1(
    case: u32,
    phi: f64,
    out: *mut *mut InvpulseCoefficients,
) -> InvpulseStatus {
    guard(|| {
        let c = match case {
            1 => Table1Case::Case1,
            2 => Table1Case::Case2,
            3 => Table1Case::Case3,
            _ => return Err(Fail::Status(InvpulseStatus::Invalid, format!("no published case {case}"))),
        };
        put(out, InvpulseCoefficients(AnsatzCoefficients::table1(c, phi)?.with_exact_constraints()))
    })
}

/// Coefficients from all eight values, which must satisfy both endpoint conditions.
///
/// # Safety
/// `a` must point to 8 readable doubles; `out` as for [`invpulse_coefficients_table1`].
#[no_mangle]
pub unsafe extern "C" fn invpulse_coefficients_new(
    a: *const f64,
    t_f: f64,
    theta: f64,
    phi: f64,
    out: *mut *mut InvpulseCoefficients,
) -> InvpulseStatus {
    guard(|| {
        if a.is_null() {
            return Err(null("a"));
        }
        let a: [f64; 8] = std::slice::from_raw_parts(a, 8).try_into().expect("eight values");
        let c = AnsatzCoefficients::new(a, t_f, theta, phi)?;
        c.check_constraints(CONSTRAINT_TOLERANCE)?;
        put(out, InvpulseCoefficients(c))
    })
}

/// Coefficients from the six free values; the last two are solved from the endpoint conditions.
///
/// # Safety
/// `free` must point to 6 readable doubles; `out` as for [`invpulse_coefficients_table1`].
#[no_mangle]
pub unsafe extern "C" fn invpulse_coefficients_from_free(
    free: *const f64,
    t_f: f64,
    theta: f64,
    phi: f64,
    out: *mut *mut InvpulseCoefficients,
) -> InvpulseStatus {
    guard(|| {
        if free.is_null() {
            return Err(null("free"));
        }
        let f: [f64; 6] = std::slice::from_raw_parts(free, 6).try_into().expect("six values");
        put(out, InvpulseCoefficients(AnsatzCoefficients::from_free(f, t_f, theta, phi)?))
    })
}

/// Copies the eight coefficients into `a`.
///
/// # Safety
/// `c` must be a live handle and `a` must point to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn invpulse_coefficients_get(c: *const InvpulseCoefficients, a: *mut f64) -> InvpulseStatus {
    guard(|| {
        let c = as_ref(c, "coefficients")?;
        if a.is_null() {
            return Err(null("a"));
        }
        std::slice::from_raw_parts_mut(a, 8).copy_from_slice(&c.0.a);
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn invpulse_coefficients_free(c: *mut InvpulseCoefficients) {
    free(c)
}

/// Samples the pulse pair on `n_samples` points over its duration.
///
/// # Safety
/// `c` must be a live handle; `out` as for [`invpulse_coefficients_table1`].
#[no_mangle]
pub unsafe extern "C" fn invpulse_pulses_synthesize(
    c: *const InvpulseCoefficients,
    n_samples: usize,
    out: *mut *mut InvpulsePulses,
) -> InvpulseStatus {
    guard(|| {
        let c = as_ref(c, "coefficients")?;
        put(out, InvpulsePulses(synthesize_samples(&c.0, n_samples)?))
    })
}

/// Time-reversed, sign-flipped copy of `p`.
///
/// # Safety
/// `p` must be a live handle; `out` as for [`invpulse_coefficients_table1`].
#[no_mangle]
pub unsafe extern "C" fn invpulse_pulses_reverse(p: *const InvpulsePulses, out: *mut *mut InvpulsePulses) -> InvpulseStatus {
    guard(|| {
        let p = as_ref(p, "pulses")?;
        put(out, InvpulsePulses(reverse_pulses(&p.0)))
    })
}

/// Number of samples per envelope, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn invpulse_pulses_len(p: *const InvpulsePulses) -> usize {
    p.as_ref().map_or(0, |p| p.0.omega_p.len())
}

/// Sample spacing in seconds and duration in seconds.
///
/// # Safety
/// `p` must be a live handle; `dt` and `t_f` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn invpulse_pulses_timing(p: *const InvpulsePulses, dt: *mut f64, t_f: *mut f64) -> InvpulseStatus {
    guard(|| {
        let p = as_ref(p, "pulses")?;
        if !dt.is_null() {
            *dt = p.0.dt;
        }
        if !t_f.is_null() {
            *t_f = p.0.t_f;
        }
        Ok(())
    })
}

/// Copies both envelopes (rad/s) into caller buffers of `capacity` doubles each.
///
/// # Safety
/// `p` must be a live handle; `omega_p` and `omega_s` must each hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn invpulse_pulses_copy(
    p: *const InvpulsePulses,
    omega_p: *mut f64,
    omega_s: *mut f64,
    capacity: usize,
) -> InvpulseStatus {
    guard(|| {
        let p = as_ref(p, "pulses")?;
        if omega_p.is_null() || omega_s.is_null() {
            return Err(null("envelope buffer"));
        }
        let n = p.0.omega_p.len();
        if capacity < n {
            return Err(Fail::Status(
                InvpulseStatus::BufferTooSmall,
                format!("buffers hold {capacity} samples, {n} needed"),
            ));
        }
        std::slice::from_raw_parts_mut(omega_p, n).copy_from_slice(&p.0.omega_p);
        std::slice::from_raw_parts_mut(omega_s, n).copy_from_slice(&p.0.omega_s);
        Ok(())
    })
}

/// Largest normalized residual of the invariant condition for `p` against the
/// construction described by `c`, with invariant frequency `omega0` (rad/s).
///
/// # Safety
/// `p` and `c` must be live handles; `residual` must be writable.
#[no_mangle]
pub unsafe extern "C" fn invpulse_pulses_invariant_residual(
    p: *const InvpulsePulses,
    c: *const InvpulseCoefficients,
    omega0: f64,
    residual: *mut f64,
) -> InvpulseStatus {
    guard(|| {
        let p = as_ref(p, "pulses")?;
        let c = as_ref(c, "coefficients")?;
        if residual.is_null() {
            return Err(null("residual"));
        }
        *residual = verify_invariant_condition(&InvariantSpec::new(omega0, c.0)?, &p.0)?;
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn invpulse_pulses_free(p: *mut InvpulsePulses) {
    free(p)
}

/// Built-in Pr:YSO model with optical T2 `t2_optical` seconds and `n_members`
/// ensemble members (0 for the default).
///
/// # Safety
/// `out` as for [`invpulse_coefficients_table1`].
#[no_mangle]
pub unsafe extern "C" fn invpulse_model_default(
    t2_optical: f64,
    n_members: usize,
    out: *mut *mut InvpulseModel,
) -> InvpulseStatus {
    guard(|| {
        let mut ensemble = EnsembleSpec::default();
        if n_members > 0 {
            ensemble.n_members = n_members;
        }
        let m = ModelBundle::new(
            LevelSystem::praseodymium_default(),
            DecoherenceSpec::with_t2_optical(t2_optical)?,
            ensemble,
            PropagationSettings::default(),
        )?;
        put(out, InvpulseModel(m))
    })
}

/// Model from a run-configuration document (TOML text).
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` as for [`invpulse_coefficients_table1`].
#[no_mangle]
pub unsafe extern "C" fn invpulse_model_from_config(toml: *const c_char, out: *mut *mut InvpulseModel) -> InvpulseStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| Fail::Status(InvpulseStatus::Invalid, format!("config is not UTF-8: {e}")))?;
        put(out, InvpulseModel(RunConfig::parse(text)?.model()?))
    })
}

/// # Safety
/// `m` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn invpulse_model_free(m: *mut InvpulseModel) {
    free(m)
}

/// Ensemble-averaged fidelity of the state reached from `initial` with the
/// target of `target` (its `theta` and `phi`). `initial` is an [`InvpulseGround`] value.
///
/// # Safety
/// `m`, `p` and `target` must be live handles; `fidelity` must be writable.
#[no_mangle]
pub unsafe extern "C" fn invpulse_transfer_fidelity(
    m: *const InvpulseModel,
    p: *const InvpulsePulses,
    target: *const InvpulseCoefficients,
    initial: u32,
    fidelity: *mut f64,
) -> InvpulseStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        let p = as_ref(p, "pulses")?;
        let t = as_ref(target, "target")?;
        if fidelity.is_null() {
            return Err(null("fidelity"));
        }
        let r = ensemble_transfer(
            &DensityState::ground(ground(initial)?),
            &p.0,
            &m.0,
            &m.0.embed(&t.0.target_state()),
        )?;
        *fidelity = r.fidelity;
        Ok(())
    })
}

/// Population experiment with the published forward pulses: writes `F(N)` for
/// `N = 1..=n_max` into `fidelities`, read after the model's standard wait and
/// normalized to the qubit population.
///
/// # Safety
/// `m` must be a live handle; `fidelities` must hold `n_max` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn invpulse_population_protocol(
    m: *const InvpulseModel,
    n_max: usize,
    fidelities: *mut f64,
) -> InvpulseStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        if fidelities.is_null() {
            return Err(null("fidelities"));
        }
        let r = PopulationPulses::table1()?.run(n_max, &m.0, &PopulationReadout::default(), true)?;
        std::slice::from_raw_parts_mut(fidelities, n_max).copy_from_slice(&overall_fidelities(&r));
        Ok(())
    })
}

/// Per-transfer fidelity `sqrt(F(N + 2) / F(N))` averaged over `N = lo..=hi`,
/// with the sample spread of the individual ratios.
///
/// # Safety
/// `fidelities` must hold `len` readable doubles; `mean` and `spread` must be writable.
#[no_mangle]
pub unsafe extern "C" fn invpulse_extract_pair_fidelity(
    fidelities: *const f64,
    len: usize,
    lo: usize,
    hi: usize,
    mean: *mut f64,
    spread: *mut f64,
) -> InvpulseStatus {
    guard(|| {
        if fidelities.is_null() || mean.is_null() || spread.is_null() {
            return Err(null("argument"));
        }
        let f = std::slice::from_raw_parts(fidelities, len);
        let e = extract_pair_fidelity(f, (lo, hi), ExtractionBasis::Population)?;
        *mean = e.per_transfer_fidelity;
        *spread = e.uncertainty;
        Ok(())
    })
}
