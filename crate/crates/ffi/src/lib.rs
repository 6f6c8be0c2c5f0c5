//! C ABI over the pooling library.
//!
//! Conventions, mirrored in the generated `include/adaptive_pool.h`:
//!
//! - `ApImage`, `ApGrid`, and `ApPooled` are opaque handles. Constructors
//!   write through an out pointer and return a status; release handles with
//!   the matching `ap_*_free`, which tolerates null.
//! - Every fallible call returns [`ApStatus`]. On failure the out params
//!   are left untouched and [`ap_last_error_message`] yields a description
//!   of the calling thread's most recent failure.
//! - Strings handed out through `char **` are heap-allocated; release them
//!   with [`ap_string_free`].
//! - Nothing unwinds across the boundary: internal panics are caught and
//!   surface as [`ApStatus::InternalPanic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use adaptive_pool::{
    build_map, compress, pool_forward, render_grid, Error, Image, OffsetVector, PoolGrid,
    PooledMap, RoiSpec,
};

/// Result of every fallible call in this ABI.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApStatus {
    /// The call succeeded and all out params are populated.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument failed validation (bad extents, malformed JSON, offset
    /// count mismatch, non-discretized grid where one is required, ...).
    InvalidArgument = 2,
    /// The operation itself failed (I/O, divergence, unsupported data).
    RuntimeError = 3,
    /// A bug: an internal panic was caught at the boundary.
    InternalPanic = 4,
}

/// An owned image: `channels` interleaved f64 samples per pixel, row-major.
pub struct ApImage(Image);

/// An owned pooling grid.
pub struct ApGrid(PoolGrid);

/// An owned pooled map: one f64 per cell and channel, row-major.
pub struct ApPooled(PooledMap);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = RefCell::new(None);
}

fn set_error(msg: String) {
    let msg = CString::new(msg)
        .unwrap_or_else(|_| CString::new("error message held a NUL byte").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: ApStatus, msg: impl std::fmt::Display) -> ApStatus {
    set_error(msg.to_string());
    status
}

fn fail_with(err: Error) -> ApStatus {
    let status = match err {
        Error::Io(_) | Error::UnsupportedImage(_) | Error::Diverged { .. } => {
            ApStatus::RuntimeError
        }
        _ => ApStatus::InvalidArgument,
    };
    fail(status, err)
}

fn guarded<F: FnOnce() -> ApStatus>(f: F) -> ApStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(ApStatus::InternalPanic, "internal panic, please report"),
    }
}

unsafe fn handle_arg<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, ApStatus> {
    if ptr.is_null() {
        Err(fail(ApStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(&*ptr)
    }
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], ApStatus> {
    if len == 0 {
        Ok(&[])
    } else if ptr.is_null() {
        Err(fail(ApStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(std::slice::from_raw_parts(ptr, len))
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, ApStatus> {
    if ptr.is_null() {
        return Err(fail(ApStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(ApStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Boxes `value` behind `out`. Failing out-pointer checks happen before
/// the work that builds `value`, so no effort is wasted on a null out.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> ApStatus {
    *out = Box::into_raw(Box::new(value));
    ApStatus::Ok
}

unsafe fn require_out<T>(out: *mut *mut T, what: &str) -> Result<(), ApStatus> {
    if out.is_null() {
        Err(fail(ApStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, what: &str) -> ApStatus {
    if dst.is_null() {
        return fail(ApStatus::NullPointer, format!("{what} is null"));
    }
    if len != src.len() {
        return fail(
            ApStatus::InvalidArgument,
            format!("{what} holds {len} values, need exactly {}", src.len()),
        );
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
    ApStatus::Ok
}

/// Returns the calling thread's most recent error message as a fresh
/// heap-allocated string, or null if no call on this thread has failed.
/// Release the result with `ap_string_free`.
#[no_mangle]
pub extern "C" fn ap_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Releases a string obtained from this library. Null is a no-op.
///
/// # Safety
/// `s` must have come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds an image from `len == width * height * channels` interleaved
/// row-major samples and writes the handle to `out`.
///
/// # Safety
/// `data` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_image_new(
    width: usize,
    height: usize,
    channels: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut ApImage,
) -> ApStatus {
    guarded(|| {
        let data = match slice_arg(data, len, "data") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        match Image::new(width, height, channels, data.to_vec()) {
            Ok(img) => emit(out, ApImage(img)),
            Err(e) => fail_with(e),
        }
    })
}

/// Releases an image handle. Null is a no-op.
///
/// # Safety
/// `img` must have come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ap_image_free(img: *mut ApImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Width in pixels; 0 if `img` is null.
///
/// # Safety
/// `img` must be null or a live image handle.
#[no_mangle]
pub unsafe extern "C" fn ap_image_width(img: *const ApImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.width())
}

/// Height in pixels; 0 if `img` is null.
///
/// # Safety
/// `img` must be null or a live image handle.
#[no_mangle]
pub unsafe extern "C" fn ap_image_height(img: *const ApImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.height())
}

/// Samples per pixel; 0 if `img` is null.
///
/// # Safety
/// `img` must be null or a live image handle.
#[no_mangle]
pub unsafe extern "C" fn ap_image_channels(img: *const ApImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.channels())
}

/// Copies the image's `width * height * channels` samples into `out`.
/// `len` must be exactly that count.
///
/// # Safety
/// `img` must be a live image handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ap_image_data(
    img: *const ApImage,
    out: *mut f64,
    len: usize,
) -> ApStatus {
    guarded(|| match handle_arg(img, "img") {
        Ok(img) => copy_out(img.0.data(), out, len, "out"),
        Err(status) => status,
    })
}

/// Builds a uniform `k_cols x k_rows` grid over a `width x height` image
/// and writes the handle to `out`. Borders land on fractional positions
/// when the extent does not divide evenly; see `ap_grid_discretize`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_uniform(
    width: usize,
    height: usize,
    k_cols: usize,
    k_rows: usize,
    out: *mut *mut ApGrid,
) -> ApStatus {
    guarded(|| {
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        match PoolGrid::uniform(width, height, k_cols, k_rows) {
            Ok(grid) => emit(out, ApGrid(grid)),
            Err(e) => fail_with(e),
        }
    })
}

/// Parses a grid from its JSON form and writes the handle to `out`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_from_json(
    json: *const c_char,
    out: *mut *mut ApGrid,
) -> ApStatus {
    guarded(|| {
        let json = match str_arg(json, "json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        match PoolGrid::from_json(json) {
            Ok(grid) => emit(out, ApGrid(grid)),
            Err(e) => fail_with(e),
        }
    })
}

/// Serializes the grid to JSON and writes a heap-allocated string to
/// `out`. Release it with `ap_string_free`.
///
/// # Safety
/// `grid` must be a live grid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_to_json(
    grid: *const ApGrid,
    out: *mut *mut c_char,
) -> ApStatus {
    guarded(|| {
        let grid = match handle_arg(grid, "grid") {
            Ok(g) => g,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(ApStatus::NullPointer, "out is null");
        }
        match CString::new(grid.0.to_json()) {
            Ok(s) => {
                *out = s.into_raw();
                ApStatus::Ok
            }
            Err(_) => fail(ApStatus::RuntimeError, "grid JSON held a NUL byte"),
        }
    })
}

/// Releases a grid handle. Null is a no-op.
///
/// # Safety
/// `grid` must have come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_free(grid: *mut ApGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Cells per row; 0 if `grid` is null.
///
/// # Safety
/// `grid` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_k_cols(grid: *const ApGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.k_cols())
}

/// Cells per column; 0 if `grid` is null.
///
/// # Safety
/// `grid` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_k_rows(grid: *const ApGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.k_rows())
}

/// True when every border sits on an integer pixel position, as pooling
/// requires; false also if `grid` is null.
///
/// # Safety
/// `grid` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_is_discretized(grid: *const ApGrid) -> bool {
    grid.as_ref().is_some_and(|g| g.0.is_discretized())
}

/// Copies the `k_cols + 1` column border positions into `out`; `len` must
/// be exactly that count.
///
/// # Safety
/// `grid` must be a live grid handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_col_borders(
    grid: *const ApGrid,
    out: *mut f64,
    len: usize,
) -> ApStatus {
    guarded(|| match handle_arg(grid, "grid") {
        Ok(grid) => copy_out(grid.0.col_borders(), out, len, "out"),
        Err(status) => status,
    })
}

/// Copies the `k_rows + 1` row border positions into `out`; `len` must be
/// exactly that count.
///
/// # Safety
/// `grid` must be a live grid handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_row_borders(
    grid: *const ApGrid,
    out: *mut f64,
    len: usize,
) -> ApStatus {
    guarded(|| match handle_arg(grid, "grid") {
        Ok(grid) => copy_out(grid.0.row_borders(), out, len, "out"),
        Err(status) => status,
    })
}

/// Displaces the interior borders: `col` holds `k_cols - 1` offsets, `row`
/// holds `k_rows - 1`, in pixels. Offsets that would push a border within
/// one pixel of a neighbor are clamped; if `overpass_fraction` is non-null
/// it receives the clamped share of movable borders. The adjusted grid is
/// written to `out`; the input grid is untouched.
///
/// # Safety
/// `grid` must be a live grid handle; `col`/`row` must hold the stated
/// counts; `overpass_fraction` must be null or writable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_apply_offsets(
    grid: *const ApGrid,
    col: *const f64,
    col_len: usize,
    row: *const f64,
    row_len: usize,
    overpass_fraction: *mut f64,
    out: *mut *mut ApGrid,
) -> ApStatus {
    guarded(|| {
        let grid = match handle_arg(grid, "grid") {
            Ok(g) => g,
            Err(status) => return status,
        };
        let col = match slice_arg(col, col_len, "col") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let row = match slice_arg(row, row_len, "row") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        let offsets = OffsetVector::new(col.to_vec(), row.to_vec());
        match grid.0.apply_offsets(&offsets) {
            Ok((moved, report)) => {
                if !overpass_fraction.is_null() {
                    *overpass_fraction = report.fraction();
                }
                emit(out, ApGrid(moved))
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Snaps every border to an integer pixel position (half-up, keeping the
/// one-pixel minimum gap) and writes the result to `out`.
///
/// # Safety
/// `grid` must be a live grid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_grid_discretize(
    grid: *const ApGrid,
    out: *mut *mut ApGrid,
) -> ApStatus {
    guarded(|| {
        let grid = match handle_arg(grid, "grid") {
            Ok(g) => g,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        emit(out, ApGrid(grid.0.discretize()))
    })
}

/// Average-pools `img` over the cells of a discretized `grid` and writes
/// the pooled map to `out`.
///
/// # Safety
/// `img` and `grid` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_pool_forward(
    img: *const ApImage,
    grid: *const ApGrid,
    out: *mut *mut ApPooled,
) -> ApStatus {
    guarded(|| {
        let img = match handle_arg(img, "img") {
            Ok(i) => i,
            Err(status) => return status,
        };
        let grid = match handle_arg(grid, "grid") {
            Ok(g) => g,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        match pool_forward(&img.0, &grid.0) {
            Ok(pooled) => emit(out, ApPooled(pooled)),
            Err(e) => fail_with(e),
        }
    })
}

/// Releases a pooled-map handle. Null is a no-op.
///
/// # Safety
/// `pooled` must have come from this library and not been freed already.
#[no_mangle]
pub unsafe extern "C" fn ap_pooled_free(pooled: *mut ApPooled) {
    if !pooled.is_null() {
        drop(Box::from_raw(pooled));
    }
}

/// Cells per row; 0 if `pooled` is null.
///
/// # Safety
/// `pooled` must be null or a live pooled-map handle.
#[no_mangle]
pub unsafe extern "C" fn ap_pooled_k_cols(pooled: *const ApPooled) -> usize {
    pooled.as_ref().map_or(0, |p| p.0.k_cols())
}

/// Cells per column; 0 if `pooled` is null.
///
/// # Safety
/// `pooled` must be null or a live pooled-map handle.
#[no_mangle]
pub unsafe extern "C" fn ap_pooled_k_rows(pooled: *const ApPooled) -> usize {
    pooled.as_ref().map_or(0, |p| p.0.k_rows())
}

/// Samples per cell; 0 if `pooled` is null.
///
/// # Safety
/// `pooled` must be null or a live pooled-map handle.
#[no_mangle]
pub unsafe extern "C" fn ap_pooled_channels(pooled: *const ApPooled) -> usize {
    pooled.as_ref().map_or(0, |p| p.0.channels())
}

/// Copies the pooled map's `k_rows * k_cols * channels` values into `out`,
/// row-major with interleaved channels. `len` must be exactly that count.
///
/// # Safety
/// `pooled` must be a live pooled-map handle; `out` must hold `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ap_pooled_data(
    pooled: *const ApPooled,
    out: *mut f64,
    len: usize,
) -> ApStatus {
    guarded(|| match handle_arg(pooled, "pooled") {
        Ok(pooled) => copy_out(pooled.0.data(), out, len, "out"),
        Err(status) => status,
    })
}

/// Compresses `img` to `k_cols x k_rows` cells sized by a region-of-
/// interest spec (the JSON form of the library's RoiSpec): an importance
/// map is built from the spec, an equal-mass grid is derived from it, and
/// the image is pooled over that grid. Writes the pooled map to
/// `out_pooled` and the discretized grid to `out_grid`.
///
/// # Safety
/// `img` must be a live image handle; `rois_json` must be a
/// NUL-terminated string; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_compress_with_rois(
    img: *const ApImage,
    rois_json: *const c_char,
    k_cols: usize,
    k_rows: usize,
    out_pooled: *mut *mut ApPooled,
    out_grid: *mut *mut ApGrid,
) -> ApStatus {
    guarded(|| {
        let img = match handle_arg(img, "img") {
            Ok(i) => i,
            Err(status) => return status,
        };
        let json = match str_arg(rois_json, "rois_json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out_pooled, "out_pooled") {
            return status;
        }
        if let Err(status) = require_out(out_grid, "out_grid") {
            return status;
        }
        let result = RoiSpec::from_json(json)
            .and_then(|spec| build_map(img.0.width(), img.0.height(), &spec))
            .and_then(|map| compress(&img.0, &map, k_cols, k_rows));
        match result {
            Ok((pooled, grid)) => {
                *out_pooled = Box::into_raw(Box::new(ApPooled(pooled)));
                *out_grid = Box::into_raw(Box::new(ApGrid(grid)));
                ApStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Renders a discretized grid as a single-channel image: each cell is
/// shaded by its area, lighter meaning smaller. Writes the image to `out`.
///
/// # Safety
/// `grid` must be a live grid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_render_grid(
    grid: *const ApGrid,
    out: *mut *mut ApImage,
) -> ApStatus {
    guarded(|| {
        let grid = match handle_arg(grid, "grid") {
            Ok(g) => g,
            Err(status) => return status,
        };
        if let Err(status) = require_out(out, "out") {
            return status;
        }
        match render_grid(&grid.0) {
            Ok(img) => emit(out, ApImage(img)),
            Err(e) => fail_with(e),
        }
    })
}
