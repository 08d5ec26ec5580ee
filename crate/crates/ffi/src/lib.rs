//! C ABI for fluxlab.
//!
//! Every function returns a [`FluxlabStatus`]; on failure the message is
//! available from [`fluxlab_last_error`] on the same thread. Handles are
//! opaque, created by `*_new`/constructor functions and released by the
//! matching `*_free`. No function unwinds across the boundary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fluxlab::config::RunConfig;
use fluxlab::flux::FluxProfile;
use fluxlab::grid::RadialGrid;
use fluxlab::perturbation::{xi_constant, Angular, AngularPotential, ClosedForm, Radial};
use fluxlab::run::{run, verify, Command};
use fluxlab::spectral::{diagonalize_in, BlockHamiltonian, SolveOptions};
use fluxlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    NoConvergence = 4,
    Config = 5,
    Io = 6,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 7,
    VerifyFailed = 8,
    Panic = 9,
}

/// A radial flux profile.
pub struct FluxlabProfile(FluxProfile);

/// An assembled channel Hamiltonian.
pub struct FluxlabModel {
    h: BlockHamiltonian,
    opts: SolveOptions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> FluxlabStatus {
    match e {
        Error::Domain(_) | Error::InvalidProfile(_) | Error::Extrapolation { .. } | Error::Aliasing { .. } => {
            FluxlabStatus::Domain
        }
        Error::GridMismatch(_) | Error::EmptyProjection(_) | Error::WeightConstruction(_) | Error::Fit(_) => {
            FluxlabStatus::Domain
        }
        Error::NoConvergence(_) => FluxlabStatus::NoConvergence,
        Error::Config { .. } => FluxlabStatus::Config,
        Error::Verify(_) => FluxlabStatus::VerifyFailed,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => FluxlabStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (FluxlabStatus, String)>) -> FluxlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FluxlabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FluxlabStatus::Panic
        }
    }
}

fn lib(e: Error) -> (FluxlabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FluxlabStatus, String) {
    (FluxlabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (FluxlabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (FluxlabStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Last error message on this thread, or null if none. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fluxlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fluxlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn profile_out(out: *mut *mut FluxlabProfile, p: fluxlab::Result<FluxProfile>) -> FluxlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = p.map_err(lib)?;
        unsafe { *out = Box::into_raw(Box::new(FluxlabProfile(p))) };
        Ok(())
    })
}

/// `Φ(r) = λ r^σ`.
#[no_mangle]
pub extern "C" fn fluxlab_profile_power_law(lambda: f64, sigma: f64, out: *mut *mut FluxlabProfile) -> FluxlabStatus {
    profile_out(out, FluxProfile::power_law(lambda, sigma))
}

/// `Φ(r) = λ r`.
#[no_mangle]
pub extern "C" fn fluxlab_profile_linear(lambda: f64, out: *mut *mut FluxlabProfile) -> FluxlabStatus {
    profile_out(out, FluxProfile::linear(lambda))
}

/// Constant field `B₀`, `Φ(r) = B₀ r²/2`.
#[no_mangle]
pub extern "C" fn fluxlab_profile_uniform_field(b0: f64, out: *mut *mut FluxlabProfile) -> FluxlabStatus {
    profile_out(out, FluxProfile::uniform_field(b0))
}

/// # Safety
/// `p` must be null or a handle from a profile constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_profile_free(p: *mut FluxlabProfile) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Flux at radius `r`.
///
/// # Safety
/// `p` must be a live profile handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_profile_eval(p: *const FluxlabProfile, r: f64, out: *mut f64) -> FluxlabStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("profile"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = p.0.eval(r).map_err(lib)?;
        Ok(())
    })
}

/// Assembles the Hamiltonian on `n_r` nodes in `(0, r_max)` with channels
/// `|j| ≤ j_max` and the perturbation `amp·e^{−rate·r}` times a Poisson
/// kernel with parameter `q`; `amp = 0` gives the unperturbed operator.
///
/// # Safety
/// `profile` must be a live profile handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_model_new(
    profile: *const FluxlabProfile,
    n_r: usize,
    r_max: f64,
    j_max: i64,
    amp: f64,
    rate: f64,
    q: f64,
    out: *mut *mut FluxlabModel,
) -> FluxlabStatus {
    guard(|| {
        let profile = profile.as_ref().ok_or_else(|| null("profile"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if j_max < 0 {
            return Err((FluxlabStatus::InvalidArgument, format!("j_max must be nonnegative, got {j_max}")));
        }
        let grid = RadialGrid::new(n_r, r_max).map_err(lib)?;
        let w = if amp == 0.0 {
            AngularPotential::zero(&grid)
        } else {
            if !(q > 0.0 && q < 1.0) || !(rate > 0.0) {
                return Err((
                    FluxlabStatus::InvalidArgument,
                    format!("need rate > 0 and 0 < q < 1 (got rate = {rate}, q = {q})"),
                ));
            }
            let cf = ClosedForm::single(Radial::Exponential { amp, rate }, Angular::Poisson { q });
            AngularPotential::from_closed_form(cf, &grid, None, None, None).map_err(lib)?
        };
        let h = BlockHamiltonian::assemble(&profile.0, &w, &grid, j_max).map_err(lib)?;
        *out = Box::into_raw(Box::new(FluxlabModel {
            h,
            opts: SolveOptions::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`fluxlab_model_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_model_free(m: *mut FluxlabModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Matrix dimension `n_r·(2 j_max + 1)`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_model_dim(m: *const FluxlabModel) -> usize {
    m.as_ref().map_or(0, |m| m.h.dim())
}

/// Eigenvalues in `[lo, hi]`, ascending. `count` receives how many there
/// are; if that exceeds `cap`, nothing is copied and the status is
/// `BufferTooSmall`. `buf` may be null when `cap` is 0.
///
/// # Safety
/// `m` must be a live model handle, `count` writable and `buf` valid for
/// `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_model_eigenvalues(
    m: *const FluxlabModel,
    lo: f64,
    hi: f64,
    buf: *mut f64,
    cap: usize,
    count: *mut usize,
) -> FluxlabStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        if count.is_null() {
            return Err(null("count"));
        }
        if !(lo <= hi) {
            return Err((FluxlabStatus::InvalidArgument, format!("empty interval [{lo}, {hi}]")));
        }
        let eig = diagonalize_in(&m.h, lo, hi, &m.opts).map_err(lib)?;
        *count = eig.len();
        if eig.len() > cap {
            return Err((
                FluxlabStatus::BufferTooSmall,
                format!("{} eigenvalues do not fit in {cap}", eig.len()),
            ));
        }
        if !eig.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, eig.len()).copy_from_slice(&eig.values);
        }
        Ok(())
    })
}

/// `ξ(a, ζ) = Σ_m e^{−(a/2)|m|^ζ}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_xi_constant(a: f64, zeta: f64, out: *mut f64) -> FluxlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = xi_constant(a, zeta, 1e-15).map_err(lib)?;
        Ok(())
    })
}

/// Runs a CLI subcommand (`"spectrum"`, `"evolve"`, …) on a config file,
/// writing artifacts to `out_dir`; with `check` nonzero the artifacts are
/// re-verified afterwards.
///
/// # Safety
/// All strings must be valid NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn fluxlab_run(
    subcommand: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    check: i32,
) -> FluxlabStatus {
    guard(|| {
        let sub = str_arg(subcommand, "subcommand")?;
        let cmd = Command::parse(sub)
            .ok_or_else(|| (FluxlabStatus::InvalidArgument, format!("unknown subcommand `{sub}`")))?;
        let cfg = RunConfig::from_path(Path::new(str_arg(config_path, "config_path")?)).map_err(lib)?;
        let out = Path::new(str_arg(out_dir, "out_dir")?);
        run(cmd, &cfg, out).map_err(lib)?;
        if check != 0 {
            let rep = verify(cmd, out).map_err(lib)?;
            if !rep.pass {
                let failed: Vec<_> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
                return Err((FluxlabStatus::VerifyFailed, failed.join(", ")));
            }
        }
        Ok(())
    })
}
