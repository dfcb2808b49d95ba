//! C ABI over the `concentra` library.
//!
//! Every fallible call returns a [`ConcentraStatus`] and writes its result
//! through an out pointer. On failure the message is available from
//! [`concentra_last_error`] on the same thread until the next failing call.
//! Objects are opaque handles released with their `_free` function; strings
//! returned by the library are released with [`concentra_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use concentra::certify::{self, Certificate};
use concentra::cli::{evaluate_constant, resolve_formula, ConstantsArgs};
use concentra::coupling::{recursive_coupling_bound, Resolution};
use concentra::entropy::{relative_entropy_discrete, relative_entropy_gaussian};
use concentra::io::{parse_measure, parse_space, MeasureDoc};
use concentra::measure::{DiscreteMeasure, Euclidean, FiniteMetricSpace, Metric, Point, RealLine};
use concentra::processes::{simulate_joint, MarkovModel, SamplePaths};
use concentra::transport::{wasserstein_exact, wasserstein_gaussian_w2};
use concentra::Error;
use serde_json::Value;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcentraStatus {
    Ok = 0,
    InvalidInput = 1,
    Internal = 2,
    NullPointer = 3,
    Resource = 4,
}

/// A finite metric space.
pub struct ConcentraSpace(FiniteMetricSpace);

/// A discrete measure (real, Euclidean or labeled) or a Gaussian.
pub struct ConcentraMeasure(MeasureDoc);

/// The outcome of an inequality check.
pub struct ConcentraCertificate(Certificate);

/// Simulated paths of a Markov model.
pub struct ConcentraPaths(SamplePaths);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ConcentraStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Input(_) => ConcentraStatus::InvalidInput,
            Error::Internal { .. } => ConcentraStatus::Internal,
            Error::Resource(_) => ConcentraStatus::Resource,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ConcentraStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ConcentraStatus::InvalidInput, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ConcentraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ConcentraStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: panic: {msg}"));
            ConcentraStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn json_arg(p: *const c_char, what: &str) -> Result<Value, Failure> {
    serde_json::from_str(str_arg(p, what)?).map_err(|e| invalid(format!("{what}: {e}")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failing call on this thread, or NULL. Owned by the library.
#[no_mangle]
pub extern "C" fn concentra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn concentra_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn concentra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- spaces and measures

/// Parses `{"type":"finite","labels":[...],"dist":[[...]]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_space_from_json(json: *const c_char, out: *mut *mut ConcentraSpace) -> ConcentraStatus {
    guard(|| {
        let space = parse_space(&json_arg(json, "json")?)?;
        write(out, Box::into_raw(Box::new(ConcentraSpace(space))), "out")
    })
}

/// # Safety
/// `space` must come from [`concentra_space_from_json`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn concentra_space_free(space: *mut ConcentraSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Parses a discrete or Gaussian measure document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_measure_from_json(
    json: *const c_char,
    out: *mut *mut ConcentraMeasure,
) -> ConcentraStatus {
    guard(|| {
        let m = parse_measure(&json_arg(json, "json")?)?;
        write(out, Box::into_raw(Box::new(ConcentraMeasure(m))), "out")
    })
}

/// # Safety
/// `measure` must come from [`concentra_measure_from_json`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn concentra_measure_free(measure: *mut ConcentraMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

enum Pair {
    Real(DiscreteMeasure<f64>, DiscreteMeasure<f64>),
    Euclidean(DiscreteMeasure<Vec<f64>>, DiscreteMeasure<Vec<f64>>),
    Finite(DiscreteMeasure<usize>, DiscreteMeasure<usize>),
    Gaussian(concentra::measure::GaussianMeasure, concentra::measure::GaussianMeasure),
}

fn pair(space: Option<&FiniteMetricSpace>, a: &MeasureDoc, b: &MeasureDoc) -> Result<Pair, Failure> {
    Ok(match (a, b) {
        (MeasureDoc::Labeled(..), MeasureDoc::Labeled(..)) => {
            let space = space.ok_or_else(|| invalid("labeled measures need a space"))?;
            Pair::Finite(a.on_space(space)?, b.on_space(space)?)
        }
        (MeasureDoc::Real(x), MeasureDoc::Real(y)) => Pair::Real(x.clone(), y.clone()),
        (MeasureDoc::Euclidean(x), MeasureDoc::Euclidean(y)) => Pair::Euclidean(x.clone(), y.clone()),
        (MeasureDoc::Gaussian(x), MeasureDoc::Gaussian(y)) => Pair::Gaussian(x.clone(), y.clone()),
        _ => return Err(invalid(format!("cannot compare a {} and a {} measure", a.kind(), b.kind()))),
    })
}

/// `W_s(mu, nu)`. `space` may be NULL unless the measures use labels.
///
/// # Safety
/// Handles must be valid or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_wasserstein(
    space: *const ConcentraSpace,
    mu: *const ConcentraMeasure,
    nu: *const ConcentraMeasure,
    s: f64,
    out: *mut f64,
) -> ConcentraStatus {
    guard(|| {
        let sp = space.as_ref().map(|s| &s.0);
        let w = match pair(sp, &obj(mu, "mu")?.0, &obj(nu, "nu")?.0)? {
            Pair::Real(x, y) => wasserstein_exact(&RealLine, &x, &y, s)?.0,
            Pair::Euclidean(x, y) => wasserstein_exact(&Euclidean, &x, &y, s)?.0,
            Pair::Finite(x, y) => wasserstein_exact(sp.unwrap(), &x, &y, s)?.0,
            Pair::Gaussian(x, y) if s == 2.0 => wasserstein_gaussian_w2(&x, &y)?,
            Pair::Gaussian(..) => return Err(invalid("Gaussian distances are closed form only for s = 2")),
        };
        write(out, w, "out")
    })
}

/// `Ent(nu | mu)`; `+inf` when `nu` is not absolutely continuous.
///
/// # Safety
/// Handles must be valid or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_relative_entropy(
    space: *const ConcentraSpace,
    nu: *const ConcentraMeasure,
    mu: *const ConcentraMeasure,
    out: *mut f64,
) -> ConcentraStatus {
    guard(|| {
        let sp = space.as_ref().map(|s| &s.0);
        let e = match pair(sp, &obj(nu, "nu")?.0, &obj(mu, "mu")?.0)? {
            Pair::Real(x, y) => relative_entropy_discrete(&x, &y),
            Pair::Euclidean(x, y) => relative_entropy_discrete(&x, &y),
            Pair::Finite(x, y) => relative_entropy_discrete(&x, &y),
            Pair::Gaussian(x, y) => relative_entropy_gaussian(&x, &y)?,
        };
        write(out, e, "out")
    })
}

// ---- constants

/// Evaluates a closed-form constant. `params_json` holds the formula inputs by
/// their CLI names, e.g. `{"kappa1":1,"L":1}`; it may be NULL when none are needed.
///
/// # Safety
/// Strings must be NUL-terminated or NULL as documented; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_constant(
    formula: *const c_char,
    params_json: *const c_char,
    n: u64,
    out: *mut f64,
) -> ConcentraStatus {
    guard(|| {
        let name = str_arg(formula, "formula")?;
        let id = resolve_formula(name).ok_or_else(|| invalid(format!("unknown formula '{name}'")))?;
        let mut params = if params_json.is_null() {
            Value::Object(Default::default())
        } else {
            json_arg(params_json, "params_json")?
        };
        let map = params
            .as_object_mut()
            .ok_or_else(|| invalid("params_json must be an object"))?;
        map.insert("formula".into(), Value::from(id));
        // matrices go through the same loader as the CLI, which takes inline JSON text
        for key in ["A", "B", "kappa_matrix"] {
            if let Some(v) = map.get_mut(key) {
                if !v.is_string() {
                    *v = Value::from(v.to_string());
                }
            }
        }
        if let Some(e) = map.get_mut("eps") {
            if let Some(x) = e.as_f64() {
                *e = Value::from(x.to_string());
            }
        }
        let args: ConstantsArgs = serde_json::from_value(params).map_err(|e| invalid(format!("params_json: {e}")))?;
        let (_, _, value) = evaluate_constant(id, &args, n)?;
        write(out, value, "out")
    })
}

// ---- certificates

fn discrete_check(
    space: Option<&FiniteMetricSpace>,
    mu: &MeasureDoc,
    check: &dyn Fn(&dyn CheckOn) -> Result<Certificate, Error>,
) -> Result<Certificate, Failure> {
    Ok(match mu {
        MeasureDoc::Real(m) => check(&(RealLine, m.clone()))?,
        MeasureDoc::Euclidean(m) => check(&(Euclidean, m.clone()))?,
        MeasureDoc::Labeled(..) => {
            let space = space.ok_or_else(|| invalid("labeled measures need a space"))?;
            check(&(space.clone(), mu.on_space(space)?))?
        }
        MeasureDoc::Gaussian(_) => return Err(invalid("certificates need a discrete measure")),
    })
}

/// Object-safe view of a measure together with its metric.
trait CheckOn {
    fn gc(&self, kappa: f64, family_size: usize, seed: u64) -> Result<Certificate, Error>;
    fn transport(&self, alpha: f64, s: f64, family_size: usize, seed: u64) -> Result<Certificate, Error>;
}

impl<P: Point, M: Metric<P>> CheckOn for (M, DiscreteMeasure<P>) {
    fn gc(&self, kappa: f64, family_size: usize, seed: u64) -> Result<Certificate, Error> {
        certify::check_gc(&self.0, &self.1, kappa, &certify::default_t_grid(), family_size, seed)
    }

    fn transport(&self, alpha: f64, s: f64, family_size: usize, seed: u64) -> Result<Certificate, Error> {
        let grid = certify::default_t_grid();
        let family = certify::default_transport_family(&self.0, &self.1, &grid, family_size, family_size, seed)?;
        let desc = format!("tilts of the GC family and {family_size} Exp(1) reweightings (seed {seed})");
        certify::check_transport(&self.0, &self.1, alpha, s, &family, &desc)
    }
}

/// Checks GC(kappa) over the default 1-Lipschitz family.
///
/// # Safety
/// Handles must be valid or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_check_gc(
    space: *const ConcentraSpace,
    mu: *const ConcentraMeasure,
    kappa: f64,
    family_size: usize,
    seed: u64,
    out: *mut *mut ConcentraCertificate,
) -> ConcentraStatus {
    guard(|| {
        let sp = space.as_ref().map(|s| &s.0);
        let cert = discrete_check(sp, &obj(mu, "mu")?.0, &|c| c.gc(kappa, family_size, seed))?;
        write(out, Box::into_raw(Box::new(ConcentraCertificate(cert))), "out")
    })
}

/// Checks T_s(alpha) over tilts of the GC family and `family_size` random reweightings.
///
/// # Safety
/// Handles must be valid or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_check_transport(
    space: *const ConcentraSpace,
    mu: *const ConcentraMeasure,
    alpha: f64,
    s: f64,
    family_size: usize,
    seed: u64,
    out: *mut *mut ConcentraCertificate,
) -> ConcentraStatus {
    guard(|| {
        let sp = space.as_ref().map(|s| &s.0);
        let cert = discrete_check(sp, &obj(mu, "mu")?.0, &|c| c.transport(alpha, s, family_size, seed))?;
        write(out, Box::into_raw(Box::new(ConcentraCertificate(cert))), "out")
    })
}

/// Verdict (1 pass, 0 fail) and worst slack of a certificate.
///
/// # Safety
/// `cert` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_certificate_summary(
    cert: *const ConcentraCertificate,
    passed: *mut i32,
    worst_slack: *mut f64,
) -> ConcentraStatus {
    guard(|| {
        let c = &obj(cert, "cert")?.0;
        write(passed, c.passed() as i32, "passed")?;
        write(worst_slack, c.worst_slack, "worst_slack")
    })
}

/// Serializes a certificate; release the string with [`concentra_string_free`].
///
/// # Safety
/// `cert` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_certificate_to_json(
    cert: *const ConcentraCertificate,
    out: *mut *mut c_char,
) -> ConcentraStatus {
    guard(|| {
        let c = &obj(cert, "cert")?.0;
        let text = serde_json::to_string(c)
            .map_err(|e| Failure(ConcentraStatus::Internal, format!("serializing certificate: {e}")))?;
        write(out, into_c_string(text), "out")
    })
}

/// # Safety
/// `cert` must come from a check function or be NULL.
#[no_mangle]
pub unsafe extern "C" fn concentra_certificate_free(cert: *mut ConcentraCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

// ---- processes

/// Simulates `n_paths` paths of length `n` of a model given as JSON (`{"kind": ...}`).
///
/// # Safety
/// `model_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_simulate(
    model_json: *const c_char,
    n: usize,
    n_paths: usize,
    seed: u64,
    out: *mut *mut ConcentraPaths,
) -> ConcentraStatus {
    guard(|| {
        let model: MarkovModel =
            serde_json::from_value(json_arg(model_json, "model_json")?).map_err(|e| invalid(format!("model: {e}")))?;
        let paths = simulate_joint(&model, n, n_paths, seed)?;
        write(out, Box::into_raw(Box::new(ConcentraPaths(paths))), "out")
    })
}

/// Shape of a path set; values are laid out as `[(path * horizon + step) * dim + c]`.
///
/// # Safety
/// `paths` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_paths_shape(
    paths: *const ConcentraPaths,
    n_paths: *mut usize,
    horizon: *mut usize,
    dim: *mut usize,
) -> ConcentraStatus {
    guard(|| {
        let p = &obj(paths, "paths")?.0;
        write(n_paths, p.n_paths, "n_paths")?;
        write(horizon, p.horizon, "horizon")?;
        write(dim, p.dim, "dim")
    })
}

/// Borrowed view of the path values, valid until the handle is freed.
///
/// # Safety
/// `paths` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_paths_data(
    paths: *const ConcentraPaths,
    data: *mut *const f64,
    len: *mut usize,
) -> ConcentraStatus {
    guard(|| {
        let p = &obj(paths, "paths")?.0;
        write(data, p.values.as_ptr(), "data")?;
        write(len, p.values.len(), "len")
    })
}

/// # Safety
/// `paths` must come from [`concentra_simulate`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn concentra_paths_free(paths: *mut ConcentraPaths) {
    if !paths.is_null() {
        drop(Box::from_raw(paths));
    }
}

// ---- coupling

/// Upper bound on `W_s(Q^(n), P^(n))` from the recursive coupling. A zero
/// `quantiles` or `atom_budget` selects the default.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn concentra_coupling_bound(
    p_json: *const c_char,
    q_json: *const c_char,
    n: usize,
    s: f64,
    quantiles: usize,
    atom_budget: usize,
    out: *mut f64,
) -> ConcentraStatus {
    guard(|| {
        let model = |p: *const c_char, what: &str| -> Result<MarkovModel, Failure> {
            serde_json::from_value(json_arg(p, what)?).map_err(|e| invalid(format!("{what}: {e}")))
        };
        let (p, q) = (model(p_json, "p_json")?, model(q_json, "q_json")?);
        let d = Resolution::default();
        let res = Resolution {
            quantiles: if quantiles == 0 { d.quantiles } else { quantiles },
            atom_budget: if atom_budget == 0 { d.atom_budget } else { atom_budget },
        };
        let b = recursive_coupling_bound(&p, &q, n, s, &res)?;
        write(out, b.upper_bound, "out")
    })
}
