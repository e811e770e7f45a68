//! C interface to the uvtex pipeline.
//!
//! Models, images, face parameters and UV maps cross the boundary as opaque
//! handles that the caller releases with the matching `_free` function.
//! Every fallible call returns a [`UvtexStatus`]; on failure the message is
//! available from [`uvtex_last_error`] on the same thread. Panics are caught
//! and reported as [`UvtexStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use uvtex::config::PipelineConfig;
use uvtex::metrics::compare;
use uvtex::params::FaceParams;
use uvtex::pipeline::{load_image, pseudo_uv};
use uvtex::uv::{default_erosion_radius, make_uv_gt};
use uvtex::{load_model, Error, Image, MorphableModel, Planar, UvMap};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UvtexStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of range, mis-sized or inconsistent.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// A file or string could not be parsed.
    Format = 4,
    /// A solve failed: underdetermined fit, indefinite system, missing
    /// boundary or no convergence.
    Numerical = 5,
    /// The library panicked; this is a bug.
    Panic = 6,
}

/// Morphable model loaded from a binary container.
pub struct UvtexModel(MorphableModel);

/// Float image with values in `[0, 1]`.
pub struct UvtexImage(Image);

/// Shape coefficients and pose of one face.
pub struct UvtexParams(FaceParams);

/// Square UV map with a per-texel validity flag.
pub struct UvtexUvMap(UvMap);

/// Image comparison metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct UvtexMetrics {
    pub l1: f64,
    pub ssim: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

struct Failure(UvtexStatus, String);

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let status = if error.is_numerical() {
            UvtexStatus::Numerical
        } else {
            match error {
                Error::Io { .. } => UvtexStatus::Io,
                Error::MalformedHeader(_)
                | Error::DimensionMismatch(_)
                | Error::IndexOutOfRange { .. }
                | Error::NonFinite(_)
                | Error::InvalidModel(_)
                | Error::ImageFormat(_)
                | Error::Parse { .. } => UvtexStatus::Format,
                _ => UvtexStatus::InvalidArgument,
            }
        };
        Failure(status, error.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(UvtexStatus::InvalidArgument, message.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> UvtexStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => UvtexStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            UvtexStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(UvtexStatus::NullArgument, format!("{name} is null")))
}

unsafe fn path(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure(UvtexStatus::NullArgument, format!("{name} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn store<T>(out: *mut *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(UvtexStatus::NullArgument, format!("{name} is null")));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null if none failed.
/// The string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn uvtex_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn uvtex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a morphable model container.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn uvtex_model_load(path_: *const c_char, out: *mut *mut UvtexModel) -> UvtexStatus {
    guard(|| {
        let p = path(path_, "path")?;
        store(out, UvtexModel(load_model(p)?), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from [`uvtex_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn uvtex_model_free(model: *mut UvtexModel) {
    release(model)
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_model_vertex_count(model: *const UvtexModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.vertex_count())
}

/// Triangle count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_model_triangle_count(model: *const UvtexModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.triangle_count())
}

/// Load a `.png` (8-bit) or `.pfm` image.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn uvtex_image_load(path_: *const c_char, out: *mut *mut UvtexImage) -> UvtexStatus {
    guard(|| {
        let p = path(path_, "path")?;
        store(out, UvtexImage(load_image(p)?), "out")
    })
}

/// Copy a row-major, interleaved RGB image of `width * height * 3` values.
///
/// # Safety
/// `data` must point to `width * height * 3` readable doubles and `out` must
/// be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn uvtex_image_from_rgb(
    width: usize,
    height: usize,
    data: *const f64,
    out: *mut *mut UvtexImage,
) -> UvtexStatus {
    guard(|| {
        borrow(data, "data")?;
        let len = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| invalid("image size overflows"))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        store(out, UvtexImage(Image::from_data(width, height, 3, values)?), "out")
    })
}

/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_image_free(image: *mut UvtexImage) {
    release(image)
}

/// Width in pixels, or 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_image_width(image: *const UvtexImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.width())
}

/// Height in pixels, or 0 for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_image_height(image: *const UvtexImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.height())
}

/// Load a face parameter file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn uvtex_params_load(path_: *const c_char, out: *mut *mut UvtexParams) -> UvtexStatus {
    guard(|| {
        let p = path(path_, "path")?;
        store(out, UvtexParams(FaceParams::load(p)?), "out")
    })
}

/// # Safety
/// `params` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_params_free(params: *mut UvtexParams) {
    release(params)
}

/// Sample the texture visible in `image` into a `resolution`-square UV map.
/// A negative `erosion_radius` selects the default for the image width.
///
/// # Safety
/// All handles must be live and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn uvtex_make_uv_gt(
    model: *const UvtexModel,
    image: *const UvtexImage,
    params: *const UvtexParams,
    resolution: usize,
    erosion_radius: i32,
    out: *mut *mut UvtexUvMap,
) -> UvtexStatus {
    guard(|| {
        let (model, image, params) = (borrow(model, "model")?, borrow(image, "image")?, borrow(params, "params")?);
        let radius = usize::try_from(erosion_radius).unwrap_or_else(|_| default_erosion_radius(image.0.width()));
        let p = &params.0;
        let uv = make_uv_gt(&image.0, &model.0, &p.alpha_id, &p.alpha_exp, &p.pose, resolution, radius)?;
        store(out, UvtexUvMap(uv), "out")
    })
}

/// Build the sampled, fitted and blended UV maps with default settings at
/// the given resolution. Any of the three outputs may be null to skip it.
///
/// # Safety
/// All handles must be live; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn uvtex_pseudo_uv(
    model: *const UvtexModel,
    image: *const UvtexImage,
    params: *const UvtexParams,
    resolution: usize,
    out_gt: *mut *mut UvtexUvMap,
    out_bfm: *mut *mut UvtexUvMap,
    out_bl: *mut *mut UvtexUvMap,
) -> UvtexStatus {
    guard(|| {
        let (model, image, params) = (borrow(model, "model")?, borrow(image, "image")?, borrow(params, "params")?);
        let config = PipelineConfig {
            uv_resolution: resolution,
            ..PipelineConfig::default()
        };
        let outputs = pseudo_uv(&model.0, &image.0, &params.0, &config).map_err(|e| {
            let Failure(status, message) = Failure::from(e.error);
            Failure(status, format!("{} failed: {message}", e.stage))
        })?;
        for (slot, map) in [(out_gt, outputs.uv_gt), (out_bfm, outputs.uv_bfm), (out_bl, outputs.uv_bl)] {
            if !slot.is_null() {
                *slot = Box::into_raw(Box::new(UvtexUvMap(map)));
            }
        }
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_uvmap_free(map: *mut UvtexUvMap) {
    release(map)
}

/// Side length in texels, or 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_uvmap_resolution(map: *const UvtexUvMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.resolution())
}

/// Channels per texel, or 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn uvtex_uvmap_channels(map: *const UvtexUvMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.channels())
}

/// Copy texel values (row-major, interleaved, `resolution^2 * channels`
/// doubles) and validity flags (`resolution^2` bytes, 1 = valid). Either
/// destination may be null; the given lengths must match exactly.
///
/// # Safety
/// `map` must be live; non-null destinations must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn uvtex_uvmap_read(
    map: *const UvtexUvMap,
    data: *mut f64,
    data_len: usize,
    valid: *mut u8,
    valid_len: usize,
) -> UvtexStatus {
    guard(|| {
        let map = &borrow(map, "map")?.0;
        if !data.is_null() {
            if data_len != map.data().len() {
                return Err(invalid(format!("data_len is {data_len}, the map holds {}", map.data().len())));
            }
            std::slice::from_raw_parts_mut(data, data_len).copy_from_slice(map.data());
        }
        if !valid.is_null() {
            if valid_len != map.valid().len() {
                return Err(invalid(format!("valid_len is {valid_len}, the map has {} texels", map.valid().len())));
            }
            let dst = std::slice::from_raw_parts_mut(valid, valid_len);
            for (d, &v) in dst.iter_mut().zip(map.valid()) {
                *d = u8::from(v);
            }
        }
        Ok(())
    })
}

/// Write the map as a PFM file plus an 8-bit PNG and its validity mask next
/// to it (`<stem>.png`, `<stem>_valid.png`).
///
/// # Safety
/// `map` must be live and `path` a nul-terminated string ending in `.pfm`.
#[no_mangle]
pub unsafe extern "C" fn uvtex_uvmap_save(map: *const UvtexUvMap, path_: *const c_char) -> UvtexStatus {
    guard(|| {
        let map = &borrow(map, "map")?.0;
        let pfm = path(path_, "path")?;
        if pfm.extension().and_then(|e| e.to_str()) != Some("pfm") {
            return Err(invalid(format!("{} does not end in .pfm", pfm.display())));
        }
        let png = pfm.with_extension("png");
        map.save_pfm(&pfm)?;
        map.save_png_pair(&png, uvtex::pipeline::validity_path(&png))?;
        Ok(())
    })
}

/// L1 distance and SSIM of two images of equal size.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn uvtex_metrics(a: *const UvtexImage, b: *const UvtexImage, out: *mut UvtexMetrics) -> UvtexStatus {
    guard(|| {
        let (a, b) = (borrow(a, "a")?, borrow(b, "b")?);
        if out.is_null() {
            return Err(Failure(UvtexStatus::NullArgument, "out is null".into()));
        }
        let report = compare(&a.0, &b.0, None)?;
        *out = UvtexMetrics {
            l1: report.l1,
            ssim: report.ssim,
        };
        Ok(())
    })
}
