//! C ABI over `apk-core`.
//!
//! Every entry point returns an [`ApkStatus`]. On failure the message is kept
//! in a per-thread slot readable through [`apk_last_error`]. Objects cross the
//! boundary as opaque handles and must be released with the matching
//! `*_free` function; strings returned to the caller with [`apk_string_free`].
//!
//! Coordinates of a patch are reported in its stored frame: true coordinates
//! are the stored ones times `2^-frame_shift` (see [`apk_ap_frame_shift`]).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use apk_core::assouad::certify_lower_bound;
use apk_core::construction::{build_diamond_set, build_saito_set, Membership, SaitoLayout, SaitoSet};
use apk_core::geometry::{Orientation, Point};
use apk_core::io::{from_json, to_json};
use apk_core::patches::{find_ap_in_saito, find_patch_in_diamond, verify_eps_ap, DiamondSearch, EpsAP};
use apk_core::ApkError;

/// Result of every call. Values match the exit codes of the `apk` binary
/// where the two overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApkStatus {
    Ok = 0,
    /// A verification ran and its verdict is negative.
    VerdictFailed = 1,
    BudgetExceeded = 2,
    CertificationFailed = 3,
    /// Malformed JSON or I/O failure.
    InvalidInput = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
    InvalidParameter = 64,
}

/// Membership answer of [`apk_set_contains`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApkMembership {
    Outside = 0,
    Origin = 1,
    Piece = 2,
}

/// A truncated Saito-type set.
pub struct ApkSet(SaitoSet);

/// A certified approximate arithmetic patch.
pub struct ApkAp(EpsAP);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &ApkError) -> ApkStatus {
    match apk_core::cli::exit_code(e) {
        1 => ApkStatus::VerdictFailed,
        2 => ApkStatus::BudgetExceeded,
        3 => ApkStatus::CertificationFailed,
        4 => ApkStatus::InvalidInput,
        _ => ApkStatus::InvalidParameter,
    }
}

struct Fail(ApkStatus, String);

impl From<ApkError> for Fail {
    fn from(e: ApkError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ApkStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic in the last-error slot.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ApkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ApkStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            ApkStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null("json"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| Fail(ApkStatus::InvalidInput, format!("json is not utf-8: {e}")))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s).map(CString::into_raw).map_err(|e| Fail(ApkStatus::InvalidInput, e.to_string()))
}

/// `m` rows of `d` coordinates, row-major.
unsafe fn orientation(rows: *const f64, m: usize, d: usize) -> Result<Orientation, Fail> {
    let flat = slice(rows, m * d, "orientation")?;
    let rows: Vec<Vec<f64>> = flat.chunks(d.max(1)).map(<[f64]>::to_vec).collect();
    Ok(Orientation::from_coords(&rows)?)
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn apk_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn apk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds `K` truncated at `depth`: segments when `diamonds` is false (then
/// `m` must be 1), otherwise m-dimensional diamonds.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_set_build(d: usize, m: usize, depth: u64, diamonds: bool, out: *mut *mut ApkSet) -> ApkStatus {
    guard(|| {
        let set = if diamonds {
            build_diamond_set(d, m, depth)?
        } else if m == 1 {
            build_saito_set(d, depth)?
        } else {
            return Err(Fail(ApkStatus::InvalidParameter, "m > 1 needs diamonds".into()));
        };
        put(out, Box::into_raw(Box::new(ApkSet(set))), "out")
    })
}

/// Parses a set from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_set_from_json(json: *const c_char, out: *mut *mut ApkSet) -> ApkStatus {
    guard(|| {
        let set: SaitoSet = from_json(text(json)?)?;
        put(out, Box::into_raw(Box::new(ApkSet(set))), "out")
    })
}

/// Serializes a set; free the result with [`apk_string_free`].
///
/// # Safety
/// `set` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_set_to_json(set: *const ApkSet, out: *mut *mut c_char) -> ApkStatus {
    guard(|| {
        let s = into_c_string(to_json(&handle(set, "set")?.0)?)?;
        put(out, s, "out")
    })
}

/// Number of pieces (the origin not counted).
///
/// # Safety
/// `set` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_set_piece_count(set: *const ApkSet, out: *mut usize) -> ApkStatus {
    guard(|| put(out, handle(set, "set")?.0.pieces.len(), "out"))
}

/// Locates `point` (length `d`) within distance `tol`. On `Piece`, `level`
/// receives the smallest matching level.
///
/// # Safety
/// `set` must be a live handle; `point` must hold `d` values; `kind` and
/// `level` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_set_contains(
    set: *const ApkSet,
    point: *const f64,
    d: usize,
    tol: f64,
    kind: *mut ApkMembership,
    level: *mut u64,
) -> ApkStatus {
    guard(|| {
        let set = &handle(set, "set")?.0;
        let p = Point::new(slice(point, d, "point")?.to_vec())?;
        let (k, j) = match set.contains(&p, tol)? {
            None => (ApkMembership::Outside, 0),
            Some(Membership::Origin) => (ApkMembership::Origin, 0),
            Some(Membership::Level(j)) => (ApkMembership::Piece, j),
        };
        put(kind, k, "kind")?;
        put(level, j, "level")
    })
}

/// Releases a set. Null is ignored.
///
/// # Safety
/// `set` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn apk_set_free(set: *mut ApkSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Finds a certified (k, eps, E)-AP. With `m = 1` and a unit row the patch
/// lies on the segment set; otherwise on the m-dimensional diamond set, with
/// the default tuple search.
///
/// # Safety
/// `orientation` must hold `m * d` values, row-major; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_find(
    d: usize,
    m: usize,
    orientation_rows: *const f64,
    k: usize,
    eps: f64,
    out: *mut *mut ApkAp,
) -> ApkStatus {
    guard(|| {
        let e = orientation(orientation_rows, m, d)?;
        let unit = m == 1 && (e.vectors()[0].norm() - 1.0).abs() <= 1e-12;
        let found = if unit {
            find_ap_in_saito(d, &e.vectors()[0], k, eps)?
        } else {
            find_patch_in_diamond(d, m, &e, k, eps, DiamondSearch::default())?
        };
        put(out, Box::into_raw(Box::new(ApkAp(found.ap))), "out")
    })
}

/// Parses a patch from its JSON form.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_from_json(json: *const c_char, out: *mut *mut ApkAp) -> ApkStatus {
    guard(|| {
        let ap: EpsAP = from_json(text(json)?)?;
        put(out, Box::into_raw(Box::new(ApkAp(ap))), "out")
    })
}

/// Serializes a patch; free the result with [`apk_string_free`].
///
/// # Safety
/// `ap` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_to_json(ap: *const ApkAp, out: *mut *mut c_char) -> ApkStatus {
    guard(|| {
        let s = into_c_string(to_json(&handle(ap, "ap")?.0)?)?;
        put(out, s, "out")
    })
}

/// Re-verifies a patch at `eps`. Returns `VerdictFailed` when the check runs
/// but fails; `worst_ratio` is written in both cases.
///
/// # Safety
/// `ap` must be a live handle; `worst_ratio` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_verify(ap: *const ApkAp, eps: f64, worst_ratio: *mut f64) -> ApkStatus {
    guard(|| {
        let ap = &handle(ap, "ap")?.0;
        let v = verify_eps_ap(&ap.points, &ap.reference, eps)?;
        put(worst_ratio, v.worst_ratio, "worst_ratio")?;
        if v.pass {
            Ok(())
        } else {
            Err(Fail(ApkStatus::VerdictFailed, format!("worst ratio {} exceeds eps = {eps}", v.worst_ratio)))
        }
    })
}

/// Number of points `k^m` and their dimension.
///
/// # Safety
/// `ap` must be a live handle; `count` and `d` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_shape(ap: *const ApkAp, count: *mut usize, d: *mut usize) -> ApkStatus {
    guard(|| {
        let ap = &handle(ap, "ap")?.0;
        put(count, ap.points.len(), "count")?;
        put(d, ap.points.first().map_or(0, Point::dim), "d")
    })
}

/// Copies the points, row-major, into `buf` of length `len`, which must be at
/// least `count * d` from [`apk_ap_shape`].
///
/// # Safety
/// `ap` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_points(ap: *const ApkAp, buf: *mut f64, len: usize) -> ApkStatus {
    guard(|| {
        let ap = &handle(ap, "ap")?.0;
        let flat: Vec<f64> = ap.points.iter().flat_map(|p| p.coords().iter().copied()).collect();
        if len < flat.len() {
            return Err(Fail(ApkStatus::InvalidParameter, format!("buffer holds {len} values, need {}", flat.len())));
        }
        if !flat.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(flat.as_ptr(), buf, flat.len());
        }
        Ok(())
    })
}

/// Level of the piece holding the patch, or `-1` when unknown.
///
/// # Safety
/// `ap` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_level(ap: *const ApkAp, out: *mut i64) -> ApkStatus {
    guard(|| {
        let level = handle(ap, "ap")?.0.level.map_or(-1, |j| j as i64);
        put(out, level, "out")
    })
}

/// Frame of the stored coordinates and scale.
///
/// # Safety
/// `ap` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_frame_shift(ap: *const ApkAp, out: *mut i64) -> ApkStatus {
    guard(|| put(out, handle(ap, "ap")?.0.frame_shift, "out"))
}

/// Releases a patch. Null is ignored.
///
/// # Safety
/// `ap` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn apk_ap_free(ap: *mut ApkAp) {
    if !ap.is_null() {
        drop(Box::from_raw(ap));
    }
}

/// Lower-bound certificates for each `ks[i]`, writing the certified exponent
/// to `exponents[i]`.
///
/// # Safety
/// `orientation` must hold `m * d` values; `ks` and `exponents` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn apk_certify_lower_bound(
    d: usize,
    m: usize,
    orientation_rows: *const f64,
    diamonds: bool,
    eps: f64,
    ks: *const usize,
    n: usize,
    exponents: *mut f64,
) -> ApkStatus {
    guard(|| {
        let e = orientation(orientation_rows, m, d)?;
        let layout = if diamonds { SaitoLayout::diamonds(d, m)? } else { SaitoLayout::segments(d)? };
        let ks = slice(ks, n, "ks")?;
        let certs = certify_lower_bound(&layout, &e, eps, ks)?;
        if n > 0 && exponents.is_null() {
            return Err(null("exponents"));
        }
        for (i, c) in certs.iter().enumerate() {
            exponents.add(i).write(c.certified_exponent);
        }
        Ok(())
    })
}
