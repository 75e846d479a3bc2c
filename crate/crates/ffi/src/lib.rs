//! C interface to `modfield`.
//!
//! Fields are opaque `MfField` handles created by the `mf_field_*`
//! constructors and released with [`mf_field_free`]. Every fallible call
//! returns an [`MfStatus`]; the message of the last failure on the calling
//! thread is available from [`mf_last_error`]. Output buffers are written
//! only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use modfield::bench::exact_field;
use modfield::error::Error;
use modfield::field::FieldLike;
use modfield::integrators::{integrate, order_estimate, Stepper};
use modfield::neural::load_model;
use modfield::systems::{reference_flow, VectorFieldSpec};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Integration failure, overflow, non-convergence or divergence.
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// A vector field `g(y, h)` together with the base system it modifies.
pub struct MfField {
    base: VectorFieldSpec,
    field: Box<dyn FieldLike>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MfStatus {
    if e.is_numerical() {
        MfStatus::Numerical
    } else if matches!(e, Error::Io(_) | Error::CorruptFile { .. } | Error::VersionMismatch { .. }) {
        MfStatus::Io
    } else {
        MfStatus::InvalidArgument
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MfStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            MfStatus::Panic
        }
    }
}

unsafe fn field_ref<'a>(p: *const MfField) -> Result<&'a MfField, Failure> {
    p.as_ref().ok_or(Failure::Null("field"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn publish(out: *mut *mut MfField, field: MfField) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(field));
    Ok(())
}

fn check_dim(field: &MfField, dim: usize) -> Result<(), Failure> {
    if dim != field.field.dim() {
        return Err(Failure::Lib(Error::ShapeMismatch(format!(
            "buffer has {dim} components, field has {}",
            field.field.dim()
        ))));
    }
    Ok(())
}

/// Creates the pendulum field `(-sin y2, y1)`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mf_field_pendulum(out: *mut *mut MfField) -> MfStatus {
    guard(|| {
        let base = VectorFieldSpec::pendulum();
        publish(
            out,
            MfField {
                field: Box::new(base.clone()),
                base,
            },
        )
    })
}

/// Creates the free rigid body with moments of inertia `i1, i2, i3`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mf_field_rigid_body(i1: f64, i2: f64, i3: f64, out: *mut *mut MfField) -> MfStatus {
    guard(|| {
        let base = VectorFieldSpec::rigid_body(i1, i2, i3)?;
        publish(
            out,
            MfField {
                field: Box::new(base.clone()),
                base,
            },
        )
    })
}

/// Creates the analytic modified field of order `k` of `base` for
/// `scheme` (`euler`, `rk2`; `midpoint` gives the exact modified field and
/// ignores `k`).
///
/// # Safety
/// `base` must be a live handle, `scheme` a NUL-terminated string and `out`
/// valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mf_field_truncated(
    base: *const MfField,
    scheme: *const c_char,
    k: usize,
    out: *mut *mut MfField,
) -> MfStatus {
    guard(|| {
        let base = field_ref(base)?.base.clone();
        let field = exact_field(&base, string(scheme, "scheme")?, k)?;
        publish(out, MfField { base, field })
    })
}

/// Loads a learned model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn mf_field_load(path: *const c_char, out: *mut *mut MfField) -> MfStatus {
    guard(|| {
        let model = load_model(Path::new(string(path, "path")?))?;
        publish(
            out,
            MfField {
                base: model.base().clone(),
                field: Box::new(model),
            },
        )
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_field_free(field: *mut MfField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mf_field_dim(field: *const MfField) -> usize {
    field.as_ref().map_or(0, |f| f.field.dim())
}

/// Writes `g(y, h)` to `out`; both buffers hold `dim` values.
///
/// # Safety
/// `y` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_field_eval(field: *const MfField, y: *const f64, dim: usize, h: f64, out: *mut f64) -> MfStatus {
    guard(|| {
        let f = field_ref(field)?;
        check_dim(f, dim)?;
        let v = f.field.eval(slice(y, dim, "y")?, h);
        slice_mut(out, dim, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Takes `n_steps` steps of size `h` with `scheme` (`euler`, `rk2`,
/// `rk2_heun`, `midpoint`, or `dopri5` at a fixed step) on the field.
/// `out` receives the `n_steps + 1` states row by row, starting with `y0`.
///
/// # Safety
/// `y0` must point to `dim` doubles and `out` to `(n_steps + 1) * dim`.
#[no_mangle]
pub unsafe extern "C" fn mf_integrate(
    field: *const MfField,
    scheme: *const c_char,
    y0: *const f64,
    dim: usize,
    h: f64,
    n_steps: usize,
    out: *mut f64,
) -> MfStatus {
    guard(|| {
        let f = field_ref(field)?;
        check_dim(f, dim)?;
        let stepper = Stepper::by_name(string(scheme, "scheme")?)?;
        let len = n_steps
            .checked_add(1)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::InvalidArgument("output size overflows".into()))?;
        let traj = integrate(&stepper, &*f.field, slice(y0, dim, "y0")?, h, n_steps)?;
        let out = slice_mut(out, len, "out")?;
        for (row, state) in out.chunks_exact_mut(dim.max(1)).zip(&traj.states) {
            row.copy_from_slice(state);
        }
        Ok(())
    })
}

/// Exact flow of the handle's base system over time `t` at tolerance `tol`.
///
/// # Safety
/// `y0` and `out` must point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_reference_flow(
    field: *const MfField,
    y0: *const f64,
    dim: usize,
    t: f64,
    tol: f64,
    out: *mut f64,
) -> MfStatus {
    guard(|| {
        let f = field_ref(field)?;
        check_dim(f, dim)?;
        let y = reference_flow(&f.base, slice(y0, dim, "y0")?, t, tol)?;
        slice_mut(out, dim, "out")?.copy_from_slice(&y);
        Ok(())
    })
}

/// Least-squares slope of `log error` against `log h` over `n` pairs.
///
/// # Safety
/// `errors` and `hs` must point to `n` doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn mf_order_estimate(errors: *const f64, hs: *const f64, n: usize, out: *mut f64) -> MfStatus {
    guard(|| {
        let p = order_estimate(slice(errors, n, "errors")?, slice(hs, n, "hs")?)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = p;
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns its full length in
/// bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
