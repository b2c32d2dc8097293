//! C ABI over `sle4lab`.
//!
//! Objects are opaque handles created by `sle4_*_new`-style calls and
//! released with the matching `sle4_*_free`. Every fallible call returns a
//! `Sle4Status`; on failure `sle4_last_error` holds a message for the calling
//! thread. Panics are caught at the boundary and reported as `SLE4_PANIC`.
//! Array outputs are copied into caller buffers whose length must match.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64 as C64;
use sle4lab::field::{Dgff, FieldSample};
use sle4lab::interface::InterfacePath;
use sle4lab::lattice::TgDomain;
use sle4lab::loewner::{ConformalMap, DrivingFunction, MapOptions};
use sle4lab::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sle4Status {
    Ok = 0,
    NullPointer = 1,
    BufferLength = 2,
    InvalidSize = 3,
    Domain = 4,
    Numerical = 5,
    Tie = 6,
    Precondition = 7,
    Swallowed = 8,
    InvalidPath = 9,
    HullCollapse = 10,
    Support = 11,
    Refine = 12,
    Input = 13,
    SeedRequired = 14,
    Resample = 15,
    Config = 16,
    Io = 17,
    Panic = 18,
}

impl From<&Error> for Sle4Status {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidSize(_) => Sle4Status::InvalidSize,
            Error::Domain(_) => Sle4Status::Domain,
            Error::Numerical(_) => Sle4Status::Numerical,
            Error::Tie { .. } => Sle4Status::Tie,
            Error::Precondition(_) => Sle4Status::Precondition,
            Error::Swallowed { .. } => Sle4Status::Swallowed,
            Error::InvalidPath(_) => Sle4Status::InvalidPath,
            Error::HullCollapse { .. } => Sle4Status::HullCollapse,
            Error::Support(_) => Sle4Status::Support,
            Error::Refine(_) => Sle4Status::Refine,
            Error::Input(_) => Sle4Status::Input,
            Error::SeedRequired(_) => Sle4Status::SeedRequired,
            Error::Resample(_) => Sle4Status::Resample,
            Error::Config(_) => Sle4Status::Config,
            Error::Io(_) => Sle4Status::Io,
        }
    }
}

/// Lattice domain with its marked arcs.
pub struct Sle4Domain {
    domain: TgDomain,
    dgff: Dgff,
}

/// Vertex values of a field on a domain.
pub struct Sle4Field(FieldSample);

/// Interface between the two arcs.
pub struct Sle4Path(InterfacePath);

/// Conformal map of a domain onto the upper half-plane.
pub struct Sle4Map(ConformalMap);

/// Driving function on a capacity grid.
pub struct Sle4Driving(DrivingFunction);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), Sle4Status>) -> Sle4Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Sle4Status::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            Sle4Status::Panic
        }
    }
}

fn fail(e: Error) -> Sle4Status {
    set_error(&e.to_string());
    Sle4Status::from(&e)
}

fn null(what: &str) -> Sle4Status {
    set_error(&format!("{what} is null"));
    Sle4Status::NullPointer
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Sle4Status> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Sle4Status> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn fill(buf: *mut f64, len: usize, src: impl ExactSizeIterator<Item = f64>) -> Result<(), Sle4Status> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len != src.len() {
        set_error(&format!("buffer holds {len} values, {} needed", src.len()));
        return Err(Sle4Status::BufferLength);
    }
    for (k, x) in src.enumerate() {
        *buf.add(k) = x;
    }
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failure on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sle4_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, including the git description when built from a checkout.
#[no_mangle]
pub extern "C" fn sle4_version() -> *const c_char {
    static V: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    V.get_or_init(|| CString::new(sle4lab::VERSION).unwrap_or_default()).as_ptr()
}

/// The boundary height `√(π/8)`.
#[no_mangle]
pub extern "C" fn sle4_lambda_critical() -> f64 {
    sle4lab::lambda_critical()
}

/// Rhombus of side `side_n` with arcs split at the corner nearest `split_fraction`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_domain_rhombus(side_n: usize, split_fraction: f64, out: *mut *mut Sle4Domain) -> Sle4Status {
    guard(|| {
        let domain = sle4lab::lattice::build_rhombus_domain(side_n, split_fraction).map_err(fail)?;
        let dgff = Dgff::new(&domain).map_err(fail)?;
        put(out, Sle4Domain { domain, dgff })
    })
}

/// # Safety
/// `d` must be null or a handle from `sle4_domain_rhombus` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sle4_domain_free(d: *mut Sle4Domain) {
    free(d)
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live domain handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_domain_num_vertices(d: *const Sle4Domain) -> usize {
    d.as_ref().map_or(0, |d| d.domain.num_vertices())
}

/// Interior vertex count, or 0 for a null handle.
///
/// # Safety
/// `d` must be null or a live domain handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_domain_num_interior(d: *const Sle4Domain) -> usize {
    d.as_ref().map_or(0, |d| d.domain.num_interior())
}

/// Planar position of vertex `v`.
///
/// # Safety
/// `d` must be a live domain handle; `x`, `y` valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn sle4_domain_position(d: *const Sle4Domain, v: usize, x: *mut f64, y: *mut f64) -> Sle4Status {
    guard(|| {
        let d = get(d, "domain")?;
        if x.is_null() || y.is_null() {
            return Err(null("output"));
        }
        if v >= d.domain.num_vertices() {
            return Err(fail(Error::Input(format!("vertex {v} out of range"))));
        }
        let z = d.domain.position(v);
        *x = z.re;
        *y = z.im;
        Ok(())
    })
}

/// Covariance of the zero-boundary field at interior vertices `u`, `v`.
///
/// # Safety
/// `d` must be a live domain handle; `out` a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sle4_discrete_green(d: *const Sle4Domain, u: usize, v: usize, out: *mut f64) -> Sle4Status {
    guard(|| {
        let d = get(d, "domain")?;
        if out.is_null() {
            return Err(null("output"));
        }
        *out = sle4lab::field::discrete_green(&d.domain, u, v).map_err(fail)?;
        Ok(())
    })
}

/// Field with `±lambda` on the arcs plus a zero-boundary DGFF drawn from `seed`.
///
/// # Safety
/// `d` must be a live domain handle; `out` valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_field_sample(d: *const Sle4Domain, lambda: f64, seed: u64, out: *mut *mut Sle4Field) -> Sle4Status {
    guard(|| {
        let d = get(d, "domain")?;
        let bd = d.domain.arc_boundary_data(lambda);
        let f = d.dgff.sample(&d.domain, &bd, seed, 0).map_err(fail)?;
        put(out, Sle4Field(f))
    })
}

/// # Safety
/// `f` must be null or a live field handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_field_free(f: *mut Sle4Field) {
    free(f)
}

/// Copies the vertex values; `len` must equal the vertex count.
///
/// # Safety
/// `f` must be a live field handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sle4_field_values(f: *const Sle4Field, buf: *mut f64, len: usize) -> Sle4Status {
    guard(|| {
        let f = get(f, "field")?;
        fill(buf, len, f.0.values.iter().copied())
    })
}

/// Zero level interface of `f` on `d`.
///
/// # Safety
/// `d`, `f` must be live handles, `f` sampled on `d`; `out` valid storage.
#[no_mangle]
pub unsafe extern "C" fn sle4_trace(d: *const Sle4Domain, f: *const Sle4Field, out: *mut *mut Sle4Path) -> Sle4Status {
    guard(|| {
        let d = get(d, "domain")?;
        let f = get(f, "field")?;
        if f.0.values.len() != d.domain.num_vertices() {
            return Err(fail(Error::Input("field does not belong to this domain".into())));
        }
        let p = sle4lab::interface::trace_interface(&d.domain, &f.0).map_err(fail)?;
        put(out, Sle4Path(p))
    })
}

/// # Safety
/// `p` must be null or a live path handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_path_free(p: *mut Sle4Path) {
    free(p)
}

/// Number of dual points, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live path handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_path_len(p: *const Sle4Path) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// Copies the dual points; both buffers must hold `sle4_path_len` values.
///
/// # Safety
/// `p` must be a live path handle; `xs`, `ys` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sle4_path_points(p: *const Sle4Path, xs: *mut f64, ys: *mut f64, len: usize) -> Sle4Status {
    guard(|| {
        let p = get(p, "path")?;
        fill(xs, len, p.0.dual_points.iter().map(|z| z.re))?;
        fill(ys, len, p.0.dual_points.iter().map(|z| z.im))
    })
}

/// Map of `d` onto H with `densify` boundary points per edge (even, ≥ 2).
///
/// # Safety
/// `d` must be a live domain handle; `out` valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_map_new(d: *const Sle4Domain, densify: usize, out: *mut *mut Sle4Map) -> Sle4Status {
    guard(|| {
        let d = get(d, "domain")?;
        let opts = MapOptions { densify, ..Default::default() };
        let m = sle4lab::loewner::map_domain_to_h(&d.domain, &opts).map_err(fail)?;
        put(out, Sle4Map(m))
    })
}

/// # Safety
/// `m` must be null or a live map handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_map_free(m: *mut Sle4Map) {
    free(m)
}

/// `φ(x + iy)` for an interior point.
///
/// # Safety
/// `m` must be a live map handle; `u`, `v` valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn sle4_map_eval(m: *const Sle4Map, x: f64, y: f64, u: *mut f64, v: *mut f64) -> Sle4Status {
    guard(|| {
        let m = get(m, "map")?;
        write_point(m.0.eval(C64::new(x, y)), u, v)
    })
}

/// `φ⁻¹(u + iv)` for a point of the open half-plane.
///
/// # Safety
/// `m` must be a live map handle; `x`, `y` valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn sle4_map_inverse(m: *const Sle4Map, u: f64, v: f64, x: *mut f64, y: *mut f64) -> Sle4Status {
    guard(|| {
        let m = get(m, "map")?;
        if !(v > 0.0) {
            return Err(fail(Error::Domain("inverse map needs Im > 0".into())));
        }
        write_point(m.0.inverse(C64::new(u, v)), x, y)
    })
}

unsafe fn write_point(z: C64, x: *mut f64, y: *mut f64) -> Result<(), Sle4Status> {
    if x.is_null() || y.is_null() {
        return Err(null("output"));
    }
    if !z.is_finite() {
        return Err(fail(Error::Numerical("non-finite image".into())));
    }
    *x = z.re;
    *y = z.im;
    Ok(())
}

/// `2 × Brownian motion` sampled every `dt` up to `horizon`.
///
/// # Safety
/// `out` must be valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_driving_sample(horizon: f64, dt: f64, seed: u64, out: *mut *mut Sle4Driving) -> Sle4Status {
    guard(|| {
        let w = sle4lab::loewner::sample_sle4_driving(horizon, dt, seed).map_err(fail)?;
        put(out, Sle4Driving(w))
    })
}

/// Driving function of the polygon through `(xs[k], ys[k])`, starting on
/// the real line, with capacity steps at most `max_increment`.
///
/// # Safety
/// `xs`, `ys` must hold `len` doubles; `out` valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_extract_driving(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    max_increment: f64,
    out: *mut *mut Sle4Driving,
) -> Sle4Status {
    guard(|| {
        if xs.is_null() || ys.is_null() {
            return Err(null("points"));
        }
        let xs = std::slice::from_raw_parts(xs, len);
        let ys = std::slice::from_raw_parts(ys, len);
        let pts = xs.iter().zip(ys).map(|(&x, &y)| C64::new(x, y)).collect();
        let path = sle4lab::loewner::HalfPlanePath::new(pts);
        let w = sle4lab::loewner::extract_driving(&path, max_increment).map_err(fail)?;
        put(out, Sle4Driving(w))
    })
}

/// # Safety
/// `w` must be null or a live driving handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_driving_free(w: *mut Sle4Driving) {
    free(w)
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live driving handle.
#[no_mangle]
pub unsafe extern "C" fn sle4_driving_len(w: *const Sle4Driving) -> usize {
    w.as_ref().map_or(0, |w| w.0.len())
}

/// Copies times and values; both buffers must hold `sle4_driving_len` values.
///
/// # Safety
/// `w` must be a live driving handle; `times`, `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sle4_driving_samples(w: *const Sle4Driving, times: *mut f64, values: *mut f64, len: usize) -> Sle4Status {
    guard(|| {
        let w = get(w, "driving")?;
        fill(times, len, w.0.times().iter().copied())?;
        fill(values, len, w.0.values().iter().copied())
    })
}

/// `g_t(x + iy)` under the Loewner flow driven by `w`.
///
/// # Safety
/// `w` must be a live driving handle; `u`, `v` valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn sle4_solve_forward(w: *const Sle4Driving, x: f64, y: f64, t: f64, u: *mut f64, v: *mut f64) -> Sle4Status {
    guard(|| {
        let w = get(w, "driving")?;
        let g = sle4lab::loewner::solve_forward(&w.0, C64::new(x, y), t).map_err(fail)?;
        write_point(g, u, v)
    })
}

/// Copies the last error message for callers that prefer an owned string.
/// Returns the message length without the terminator; writes at most
/// `cap − 1` bytes plus a terminator when `buf` is non-null.
///
/// # Safety
/// `buf` must be null or hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn sle4_last_error_copy(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}
