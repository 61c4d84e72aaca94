//! C ABI over `spinkac`.
//!
//! Every function returns an [`SkStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read back with
//! [`sk_last_error`]. Probability vectors have `2^n` entries indexed by the
//! spin bitmask (bit `l` set means site `l + 1` is up).

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use spinkac::downup::{self, DuInstance};
use spinkac::dynamics::{self, EvolveOptions};
use spinkac::kernel::CollisionContext;
use spinkac::model::{parse_model, Model};
use spinkac::rng::Reduction;
use spinkac::spin::{self, InteractionMatrix, ProbVec};
use spinkac::{wild, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Capacity = 3,
    Domain = 4,
    Numeric = 5,
    Precondition = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    Panic = 99,
}

impl From<&Error> for SkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Capacity(_) => SkStatus::Capacity,
            Error::Domain(_) => SkStatus::Domain,
            Error::Numeric(_) => SkStatus::Numeric,
            Error::Precondition(_) => SkStatus::Precondition,
            Error::Invalid(_) => SkStatus::InvalidArgument,
            Error::Parse { .. } => SkStatus::Parse,
            Error::Io { .. } => SkStatus::Io,
        }
    }
}

/// Opaque model handle.
pub struct SkModel {
    model: Model,
    ctx: CollisionContext,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(SkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SkStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SkStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SkStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            SkStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_slice(dst: *mut f64, cap: usize, src: &[f64], what: &str) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null(what));
    }
    if cap < src.len() {
        return Err(Fail(SkStatus::BufferTooSmall, format!("{what} needs {} entries, got {cap}", src.len())));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn model_ref<'a>(m: *const SkModel) -> Result<&'a SkModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn wrap(model: Model) -> Result<*mut SkModel, Fail> {
    let ctx = model.context()?;
    Ok(Box::into_raw(Box::new(SkModel { model, ctx })))
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `cap`) and returns its full length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn sk_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses a model from text in the model-file format.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sk_model_parse(text: *const c_char, out: *mut *mut SkModel) -> SkStatus {
    guard(|| {
        let text = read_str(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = wrap(parse_model(text, "<string>")?)?;
        Ok(())
    })
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sk_model_load(path: *const c_char, out: *mut *mut SkModel) -> SkStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = wrap(Model::load(Path::new(path))?)?;
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sk_model_free(model: *mut SkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of sites `n`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_model_sites(model: *const SkModel, n: *mut usize) -> SkStatus {
    guard(|| {
        let m = model_ref(model)?;
        *n.as_mut().ok_or_else(|| null("n"))? = m.model.n();
        Ok(())
    })
}

/// Number of conserved blocks of the kernel.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_model_blocks(model: *const SkModel, k: *mut usize) -> SkStatus {
    guard(|| {
        let m = model_ref(model)?;
        *k.as_mut().ok_or_else(|| null("k"))? = m.model.partition().len();
        Ok(())
    })
}

/// Gibbs measure of the model field into `out` (`2^n` entries).
///
/// # Safety
/// `out` must be valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_gibbs(model: *const SkModel, out: *mut f64, cap: usize) -> SkStatus {
    guard(|| {
        let m = model_ref(model)?;
        let mu = spin::gibbs_measure(&m.model.j, &m.model.h)?;
        write_slice(out, cap, mu.as_slice(), "out")
    })
}

/// Largest entry of `|mu o mu - mu|` for the Gibbs measure of the model.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_stationarity_residual(model: *const SkModel, residual: *mut f64) -> SkStatus {
    guard(|| {
        let m = model_ref(model)?;
        let mu = spin::gibbs_measure(&m.model.j, &m.model.h)?;
        *residual.as_mut().ok_or_else(|| null("residual"))? = dynamics::stationarity_residual(&m.ctx, &mu)?;
        Ok(())
    })
}

/// Closed-form entropy decay rate; `Domain` when `J` is outside its range.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sk_alpha_bound(model: *const SkModel, alpha: *mut f64) -> SkStatus {
    guard(|| {
        let m = model_ref(model)?;
        let a = dynamics::alpha_bound(&m.model.j)
            .value()
            .ok_or_else(|| Fail(SkStatus::Domain, "J is not nonnegative definite with top eigenvalue below 1/2".into()))?;
        *alpha.as_mut().ok_or_else(|| null("alpha"))? = a;
        Ok(())
    })
}

/// Solution of the nonlinear equation at `t_end` from `p0` (`2^n`
/// weights, normalised internally) into `out`.
///
/// # Safety
/// `p0` must hold `len` doubles and `out` be valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_evolve(
    model: *const SkModel,
    p0: *const f64,
    len: usize,
    t_end: f64,
    dt: f64,
    out: *mut f64,
    cap: usize,
) -> SkStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = ProbVec::from_weights(m.model.n(), read_slice(p0, len, "p0")?.to_vec())?;
        let mut opts = EvolveOptions::new(t_end, dt);
        opts.store_every = usize::MAX;
        let traj = dynamics::evolve(&m.ctx, &p, opts)?;
        write_slice(out, cap, traj.final_state().as_slice(), "out")
    })
}

/// Monte Carlo solution at time `t` from random collision trees; mean and
/// standard error per state. Bitwise reproducible for a fixed seed.
///
/// # Safety
/// `p0` must hold `len` doubles; `mean` and `stderr` must be valid for
/// `cap` doubles each.
#[no_mangle]
pub unsafe extern "C" fn sk_tree_solution(
    model: *const SkModel,
    p0: *const f64,
    len: usize,
    t: f64,
    samples: usize,
    seed: u64,
    mean: *mut f64,
    stderr: *mut f64,
    cap: usize,
) -> SkStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = ProbVec::from_weights(m.model.n(), read_slice(p0, len, "p0")?.to_vec())?;
        let est = wild::mc_solution(&m.ctx, &p, t, samples, seed, Reduction::Deterministic)?;
        write_slice(mean, cap, &est.mean, "mean")?;
        write_slice(stderr, cap, &est.stderr, "stderr")
    })
}

/// Sampled MLSI ratio of the single-block Down-Up walk on `L` sites with
/// magnetization `m`. `lambda` is `L x L` row-major, `w` has `L` entries.
/// `constant` receives the closed-form constant or NaN when it does not apply.
///
/// # Safety
/// `lambda` must hold `l * l` doubles, `w` `l` doubles; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn sk_downup_mlsi(
    l: usize,
    lambda: *const f64,
    w: *const f64,
    m: i64,
    trials: usize,
    seed: u64,
    min_ratio: *mut f64,
    constant: *mut f64,
) -> SkStatus {
    guard(|| {
        let lam = InteractionMatrix::new(l, read_slice(lambda, l * l, "lambda")?.to_vec())?;
        let w = read_slice(w, l, "w")?.to_vec();
        let meas = downup::du_measure(&DuInstance::canonical(lam, w, m)?)?;
        let s = downup::du_mlsi_scan(&meas, trials, seed)?;
        *min_ratio.as_mut().ok_or_else(|| null("min_ratio"))? = s.min_ratio;
        *constant.as_mut().ok_or_else(|| null("constant"))? = s.constant.unwrap_or(f64::NAN);
        Ok(())
    })
}
