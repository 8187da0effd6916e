//! C interface to `cdistab`.
//!
//! Objects are opaque handles created by `*_new` functions and released with
//! the matching `*_free`. Every fallible call returns a [`CdiStatus`]; on
//! failure the message is available from [`cdistab_last_error`] on the same
//! thread. Panics are caught at the boundary and reported as
//! [`CdiStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use cdistab::geometry::{Vec2, Vec4};
use cdistab::integrator::{integrate, StepControl, Trajectory};
use cdistab::lyapunov::LyapunovContext;
use cdistab::saturation::{CustomTable, ModifiedSaturation, SaturationFn, SaturationKind};
use cdistab::systems::{a_eps_matrix, spectral_abscissa, SystemSpec};
use cdistab::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    InvalidFunction = 4,
    Quadrature = 5,
    Divergence = 6,
    Io = 7,
    Internal = 8,
}

/// Built-in saturation shapes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdiSaturationKind {
    Standard = 0,
    Tanh = 1,
    Arctan = 2,
}

/// A saturation function `σ`.
pub struct CdiSaturation(SaturationFn);

/// The modified saturation `S` built from some `σ`, with its tables.
pub struct CdiModified(Arc<ModifiedSaturation>);

/// Sampled trajectory.
pub struct CdiTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CdiStatus {
    match e {
        Error::Domain(_) | Error::Range { .. } | Error::Precondition(_) | Error::NotControllable => CdiStatus::Domain,
        Error::InvalidFunction(_) => CdiStatus::InvalidFunction,
        Error::Quadrature { .. } => CdiStatus::Quadrature,
        Error::Divergence { .. } => CdiStatus::Divergence,
        Error::Io(_) => CdiStatus::Io,
        Error::Usage(_) | Error::Config(_) => CdiStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (CdiStatus, String)>>(f: F) -> CdiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CdiStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CdiStatus::Internal
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (CdiStatus, String)>;
}

impl<T> IntoFfi<T> for Result<T, Error> {
    fn ffi(self) -> Result<T, (CdiStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (CdiStatus, String) {
    (CdiStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CdiStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), (CdiStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

unsafe fn read_array<const N: usize>(p: *const f64, what: &str) -> Result<[f64; N], (CdiStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let mut a = [0.0; N];
    a.copy_from_slice(std::slice::from_raw_parts(p, N));
    Ok(a)
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, or 0 if none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cdistab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdistab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// --- saturation ------------------------------------------------------------

/// Creates `σ(ξ) = g(k1 ξ)/k2` for a built-in shape `g`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_saturation_new(
    kind: CdiSaturationKind,
    k1: f64,
    k2: f64,
    out: *mut *mut CdiSaturation,
) -> CdiStatus {
    guard(|| {
        let kind = match kind {
            CdiSaturationKind::Standard => SaturationKind::Standard,
            CdiSaturationKind::Tanh => SaturationKind::Tanh,
            CdiSaturationKind::Arctan => SaturationKind::Arctan,
        };
        let s = SaturationFn::new(kind, k1, k2).ffi()?;
        write_out(out, Box::into_raw(Box::new(CdiSaturation(s))))
    })
}

/// Creates a tabulated `σ` from a CSV file with header `xi,sigma`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_saturation_from_csv(path: *const c_char, out: *mut *mut CdiSaturation) -> CdiStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|e| (CdiStatus::InvalidArgument, e.to_string()))?;
        let table = CustomTable::from_csv_path(Path::new(p)).ffi()?;
        let s = SaturationFn::custom(table).ffi()?;
        write_out(out, Box::into_raw(Box::new(CdiSaturation(s))))
    })
}

/// # Safety
/// `s` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdistab_saturation_free(s: *mut CdiSaturation) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_saturation_eval(s: *const CdiSaturation, xi: f64, out: *mut f64) -> CdiStatus {
    guard(|| write_out(out, deref(s, "saturation")?.0.eval(xi)))
}

/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_saturation_prime(s: *const CdiSaturation, xi: f64, out: *mut f64) -> CdiStatus {
    guard(|| write_out(out, deref(s, "saturation")?.0.prime(xi)))
}

/// Writes `σ∞` and `σ'(0)`.
///
/// # Safety
/// `s` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cdistab_saturation_constants(
    s: *const CdiSaturation,
    sigma_inf: *mut f64,
    sigma_prime_0: *mut f64,
) -> CdiStatus {
    guard(|| {
        let s = &deref(s, "saturation")?.0;
        write_out(sigma_inf, s.sigma_inf())?;
        write_out(sigma_prime_0, s.sigma_prime_0())
    })
}

// --- modified saturation -----------------------------------------------------

/// Builds `S` from `σ`. The saturation handle stays owned by the caller.
///
/// # Safety
/// `s` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_modified_new(s: *const CdiSaturation, out: *mut *mut CdiModified) -> CdiStatus {
    guard(|| {
        let m = ModifiedSaturation::new(deref(s, "saturation")?.0.clone()).ffi()?;
        write_out(out, Box::into_raw(Box::new(CdiModified(Arc::new(m)))))
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdistab_modified_free(m: *mut CdiModified) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_modified_eval(m: *const CdiModified, xi: f64, out: *mut f64) -> CdiStatus {
    guard(|| write_out(out, deref(m, "modified saturation")?.0.eval(xi).ffi()?))
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_modified_prime(m: *const CdiModified, xi: f64, out: *mut f64) -> CdiStatus {
    guard(|| write_out(out, deref(m, "modified saturation")?.0.prime(xi).ffi()?))
}

/// `A(r) = ∫₀ʳ S`, for `r ≥ 0`.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_modified_antideriv(m: *const CdiModified, r: f64, out: *mut f64) -> CdiStatus {
    guard(|| write_out(out, deref(m, "modified saturation")?.0.antideriv(r).ffi()?))
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_modified_s_inf(m: *const CdiModified, out: *mut f64) -> CdiStatus {
    guard(|| write_out(out, deref(m, "modified saturation")?.0.s_inf()))
}

/// `V₀(z, y)` for `z`, `y` each pointing at 2 doubles.
///
/// # Safety
/// `m` must be a live handle, `z` and `y` must point at 2 doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cdistab_v0(m: *const CdiModified, z: *const f64, y: *const f64, out: *mut f64) -> CdiStatus {
    guard(|| {
        let ctx = LyapunovContext::new(deref(m, "modified saturation")?.0.clone());
        let (z, y) = (Vec2::from(read_array::<2>(z, "z")?), Vec2::from(read_array::<2>(y, "y")?));
        write_out(out, ctx.v0(&z, &y).ffi()?)
    })
}

/// `dV₀/dt` along the averaged system.
///
/// # Safety
/// As for [`cdistab_v0`].
#[no_mangle]
pub unsafe extern "C" fn cdistab_v0_dot_t0(m: *const CdiModified, z: *const f64, y: *const f64, out: *mut f64) -> CdiStatus {
    guard(|| {
        let ctx = LyapunovContext::new(deref(m, "modified saturation")?.0.clone());
        let (z, y) = (Vec2::from(read_array::<2>(z, "z")?), Vec2::from(read_array::<2>(y, "y")?));
        write_out(out, ctx.v0_dot_t0(&z, &y).ffi()?)
    })
}

/// Spectral abscissa of the linear part of the scaled loop at `eps`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdistab_a_eps_abscissa(eps: f64, out: *mut f64) -> CdiStatus {
    guard(|| write_out(out, spectral_abscissa(&a_eps_matrix(eps).ffi()?).ffi()?))
}

// --- simulation -----------------------------------------------------------

unsafe fn run(
    sys: &SystemSpec,
    x0: *const f64,
    t_end: f64,
    h: f64,
    sample_dt: f64,
    out: *mut *mut CdiTrajectory,
) -> Result<(), (CdiStatus, String)> {
    let x0 = read_array::<4>(x0, "x0")?;
    let traj = integrate(sys, &x0, (0.0, t_end), &StepControl::fixed(h), sample_dt, None, sys.state_names()).ffi()?;
    write_out(out, Box::into_raw(Box::new(CdiTrajectory(traj))))
}

/// Integrates `x' = J₂(2π)x − e₄σ(kᵀx)` on `[0, t_end]` with fixed RK4 step `h`.
///
/// # Safety
/// `s` live, `k` and `x0` point at 4 doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cdistab_simulate_s1(
    s: *const CdiSaturation,
    k: *const f64,
    x0: *const f64,
    t_end: f64,
    h: f64,
    sample_dt: f64,
    out: *mut *mut CdiTrajectory,
) -> CdiStatus {
    guard(|| {
        let sys = SystemSpec::s1(Vec4::from(read_array::<4>(k, "k")?), deref(s, "saturation")?.0.clone());
        run(&sys, x0, t_end, h, sample_dt, out)
    })
}

/// Integrates the rotating-frame system at `eps` from `(z, y) = x0`.
///
/// # Safety
/// `s` live, `x0` points at 4 doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cdistab_simulate_t_eps(
    s: *const CdiSaturation,
    eps: f64,
    x0: *const f64,
    t_end: f64,
    h: f64,
    sample_dt: f64,
    out: *mut *mut CdiTrajectory,
) -> CdiStatus {
    guard(|| {
        let sys = SystemSpec::t_eps(eps, deref(s, "saturation")?.0.clone()).ffi()?;
        run(&sys, x0, t_end, h, sample_dt, out)
    })
}

/// Integrates the averaged system from `(z, y) = x0`.
///
/// # Safety
/// `m` live, `x0` points at 4 doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cdistab_simulate_t0(
    m: *const CdiModified,
    x0: *const f64,
    t_end: f64,
    h: f64,
    sample_dt: f64,
    out: *mut *mut CdiTrajectory,
) -> CdiStatus {
    guard(|| {
        let sys = SystemSpec::t0(deref(m, "modified saturation")?.0.clone());
        run(&sys, x0, t_end, h, sample_dt, out)
    })
}

/// # Safety
/// `t` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdistab_trajectory_free(t: *mut CdiTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdistab_trajectory_len(t: *const CdiTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// State dimension; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdistab_trajectory_dim(t: *const CdiTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.dim())
}

/// Copies sample `i`: its time into `time` and its state into `state`,
/// which must hold `dim` doubles.
///
/// # Safety
/// `t` live; `time` valid; `state` points at `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cdistab_trajectory_sample(
    t: *const CdiTrajectory,
    i: usize,
    time: *mut f64,
    state: *mut f64,
) -> CdiStatus {
    guard(|| {
        let t = &deref(t, "trajectory")?.0;
        if i >= t.len() {
            return Err((CdiStatus::InvalidArgument, format!("sample {i} out of range (len {})", t.len())));
        }
        if state.is_null() {
            return Err(null("state"));
        }
        let x = &t.states()[i];
        ptr::copy_nonoverlapping(x.as_ptr(), state, x.len());
        write_out(time, t.times()[i])
    })
}

/// Writes the trajectory as CSV.
///
/// # Safety
/// `t` live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cdistab_trajectory_write_csv(t: *const CdiTrajectory, path: *const c_char) -> CdiStatus {
    guard(|| {
        let t = &deref(t, "trajectory")?.0;
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|e| (CdiStatus::InvalidArgument, e.to_string()))?;
        let f = std::fs::File::create(p).map_err(|e| (CdiStatus::Io, e.to_string()))?;
        t.write_csv(std::io::BufWriter::new(f)).ffi()
    })
}
