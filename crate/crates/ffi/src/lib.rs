//! C ABI over `hamspace`: Hamming and projected Hamming distances, and
//! multi-index hashing indexes behind an opaque handle.
//!
//! Codes cross the boundary as `bits / 8` little-endian bytes, the same
//! layout as the code files. Every fallible function returns an
//! [`HsStatus`]; on failure [`hs_last_error`] describes what went wrong on
//! the calling thread. Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use hamspace::bitcode::{check_width, hamming_distance, projected_hamming_dissimilarity};
use hamspace::mih::SearchResult;
use hamspace::{Error, HashCode, MihIndex};

/// Result of every fallible call. Values 2 to 5 match the command-line exit
/// codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    Usage = 2,
    Format = 3,
    Contract = 4,
    Numeric = 5,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque multi-index hashing index.
pub struct HsIndex {
    inner: MihIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HsStatus {
    match e.exit_code() {
        2 => HsStatus::Usage,
        3 => HsStatus::Format,
        4 => HsStatus::Contract,
        _ => HsStatus::Numeric,
    }
}

enum Failure {
    Null(&'static str),
    Small(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn call(f: impl FnOnce() -> Result<(), Failure>) -> HsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is null"));
            HsStatus::NullPointer
        }
        Ok(Err(Failure::Small(msg))) => {
            set_last_error(msg);
            HsStatus::BufferTooSmall
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            HsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `bits / 8` readable bytes.
unsafe fn read_code(p: *const u8, bits: u32, what: &'static str) -> Result<HashCode, Failure> {
    non_null(p, what)?;
    check_width(bits)?;
    // SAFETY: non-null and, per the caller's contract, `bits / 8` bytes long.
    let bytes = unsafe { slice::from_raw_parts(p, (bits / 8) as usize) };
    Ok(HashCode::from_le_bytes(bytes, bits)?)
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn read_path<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    non_null(p, "path")?;
    // SAFETY: non-null and NUL-terminated per the caller's contract.
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Error::usage("path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of differing bits between two codes of width `bits`.
///
/// # Safety
/// `a` and `b` must each point to `bits / 8` readable bytes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hs_hamming_distance(a: *const u8, b: *const u8, bits: u32, out: *mut u32) -> HsStatus {
    call(|| {
        non_null(out, "out")?;
        let (a, b) = unsafe { (read_code(a, bits, "a")?, read_code(b, bits, "b")?) };
        let d = hamming_distance(&a, &b)?;
        // SAFETY: checked non-null; caller guarantees it is writable.
        unsafe { *out = d };
        Ok(())
    })
}

/// Number of bits set in the user code `u` and clear in the item code `i`.
///
/// # Safety
/// As for [`hs_hamming_distance`].
#[no_mangle]
pub unsafe extern "C" fn hs_projected_hamming(u: *const u8, i: *const u8, bits: u32, out: *mut u32) -> HsStatus {
    call(|| {
        non_null(out, "out")?;
        let (u, i) = unsafe { (read_code(u, bits, "u")?, read_code(i, bits, "i")?) };
        let d = projected_hamming_dissimilarity(&u, &i)?;
        // SAFETY: checked non-null; caller guarantees it is writable.
        unsafe { *out = d };
        Ok(())
    })
}

/// Builds an index over `count` codes of width `bits` stored back to back,
/// split into `m` substrings. The handle must be released with
/// [`hs_index_free`].
///
/// # Safety
/// `codes` must point to `count * bits / 8` readable bytes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hs_index_build(
    codes: *const u8,
    count: usize,
    bits: u32,
    m: u32,
    out: *mut *mut HsIndex,
) -> HsStatus {
    call(|| {
        non_null(out, "out")?;
        check_width(bits)?;
        let width = (bits / 8) as usize;
        let parsed = if count == 0 {
            Vec::new()
        } else {
            non_null(codes, "codes")?;
            let len = count
                .checked_mul(width)
                .ok_or_else(|| Error::usage("code buffer size overflows"))?;
            // SAFETY: non-null and `count * bits / 8` bytes long per the contract.
            let bytes = unsafe { slice::from_raw_parts(codes, len) };
            bytes
                .chunks_exact(width)
                .map(|c| HashCode::from_le_bytes(c, bits))
                .collect::<hamspace::Result<Vec<_>>>()?
        };
        let inner = MihIndex::build_with_width(parsed, bits, m)?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(HsIndex { inner })) };
        Ok(())
    })
}

/// Loads an index written by [`hs_index_save`] or the command line.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_index_load(path: *const c_char, out: *mut *mut HsIndex) -> HsStatus {
    call(|| {
        non_null(out, "out")?;
        let path = unsafe { read_path(path)? };
        let (inner, _) = MihIndex::load(path)?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(HsIndex { inner })) };
        Ok(())
    })
}

/// Writes the index and its sidecar.
///
/// # Safety
/// `index` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_index_save(index: *const HsIndex, path: *const c_char) -> HsStatus {
    call(|| {
        non_null(index, "index")?;
        let path = unsafe { read_path(path)? };
        // SAFETY: non-null live handle per the contract.
        let index = unsafe { &*index };
        index.inner.save(path, None, Default::default())?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `index` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_index_free(index: *mut HsIndex) {
    if !index.is_null() {
        // SAFETY: created by Box::into_raw and not yet freed.
        drop(unsafe { Box::from_raw(index) });
    }
}

/// Number of stored codes; 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_index_len(index: *const HsIndex) -> usize {
    unsafe { index.as_ref() }.map_or(0, |i| i.inner.len())
}

/// Code width in bits; 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_index_bits(index: *const HsIndex) -> u32 {
    unsafe { index.as_ref() }.map_or(0, |i| i.inner.bits())
}

/// Number of substring tables; 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_index_substrings(index: *const HsIndex) -> u32 {
    unsafe { index.as_ref() }.map_or(0, |i| i.inner.substrings())
}

/// # Safety
/// `ids` and `distances` must be null or hold `capacity` writable slots;
/// `out_len` must be writable.
unsafe fn write_hits(
    result: &SearchResult,
    ids: *mut u32,
    distances: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> Result<(), Failure> {
    let n = result.hits.len();
    // SAFETY: checked non-null by the callers.
    unsafe { *out_len = n };
    if n > capacity {
        return Err(Failure::Small(format!("{n} hits do not fit in {capacity} slots")));
    }
    if n > 0 {
        non_null(ids, "ids")?;
        non_null(distances, "distances")?;
    }
    for (j, h) in result.hits.iter().enumerate() {
        // SAFETY: j < n <= capacity slots per the contract.
        unsafe {
            *ids.add(j) = h.id;
            *distances.add(j) = h.distance;
        }
    }
    Ok(())
}

/// Exact k nearest neighbours of `query`, ordered by distance then id.
/// Writes up to `capacity` hits and the hit count to `out_len`; returns
/// `BufferTooSmall` when `capacity` is short.
///
/// # Safety
/// `index` must be a live handle, `query` must point to `bits / 8` bytes,
/// `ids` and `distances` must hold `capacity` slots and `out_len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hs_index_knn(
    index: *const HsIndex,
    query: *const u8,
    k: usize,
    ids: *mut u32,
    distances: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> HsStatus {
    call(|| {
        non_null(index, "index")?;
        non_null(out_len, "out_len")?;
        // SAFETY: non-null live handle per the contract.
        let index = unsafe { &*index };
        let q = unsafe { read_code(query, index.inner.bits(), "query")? };
        let (result, _) = index.inner.knn_search(&q, k)?;
        unsafe { write_hits(&result, ids, distances, capacity, out_len) }
    })
}

/// Every stored code within Hamming distance `r` of `query`, ordered by
/// distance then id. Buffer handling as for [`hs_index_knn`].
///
/// # Safety
/// As for [`hs_index_knn`].
#[no_mangle]
pub unsafe extern "C" fn hs_index_radius(
    index: *const HsIndex,
    query: *const u8,
    r: u32,
    ids: *mut u32,
    distances: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> HsStatus {
    call(|| {
        non_null(index, "index")?;
        non_null(out_len, "out_len")?;
        // SAFETY: non-null live handle per the contract.
        let index = unsafe { &*index };
        let q = unsafe { read_code(query, index.inner.bits(), "query")? };
        let (result, _) = index.inner.radius_search(&q, r)?;
        unsafe { write_hits(&result, ids, distances, capacity, out_len) }
    })
}
