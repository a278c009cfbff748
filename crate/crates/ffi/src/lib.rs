//! C ABI for loading `.lava` assets, rendering frames, and building frame
//! packets.
//!
//! Every fallible function returns a [`LavaStatus`]. On failure the
//! message is available from [`lava_last_error`] on the same thread until
//! the next failing call. Handles are opaque; free each with its `_free`
//! function. Passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lava::camera::Camera;
use lava::codec::{decode_asset, encode_frame, FramePacket, Pose};
use lava::math::Vec3;
use lava::model::{AvatarAsset, ExpressionParams};
use lava::raster::{render, BlendMode, Frame, RenderOptions};
use lava::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LavaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Codec = 4,
    Render = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LavaBlendMode {
    Prebaked = 0,
    Fused = 1,
}

/// Loaded asset.
pub struct LavaAsset {
    inner: AvatarAsset,
}

/// Rendered frame: RGB8 pixels plus per-pixel transmittance.
pub struct LavaFrame {
    inner: Frame,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LavaAssetInfo {
    pub layers: u32,
    pub warp_basis: u32,
    pub tex_basis: u32,
    pub params: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub tex_res: u32,
    pub warp_res: u32,
    pub has_specular: bool,
    pub scene_center: [f32; 3],
}

/// Pinhole camera. `fov_y_deg` is the vertical field of view in degrees.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LavaCamera {
    pub position: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_y_deg: f64,
    pub width: u32,
    pub height: u32,
    pub near_plane: f64,
    pub far_plane: f64,
}

/// Camera pose for server-blend packets: translation and an `(x, y, z, w)`
/// quaternion.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LavaPose {
    pub translation: [f32; 3],
    pub rotation: [f32; 4],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: LavaStatus, msg: impl Into<String>) -> LavaStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> LavaStatus {
    match e {
        Error::Io(_) => LavaStatus::Io,
        Error::Codec(_) => LavaStatus::Codec,
        Error::Input(_) => LavaStatus::InvalidArgument,
        _ => LavaStatus::Render,
    }
}

fn guard(f: impl FnOnce() -> LavaStatus) -> LavaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LavaStatus::Panic, "internal panic"),
    }
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn lava_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lava_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn store_asset(asset: AvatarAsset, out: *mut *mut LavaAsset) -> LavaStatus {
    // SAFETY: callers checked `out` for NULL.
    unsafe { *out = Box::into_raw(Box::new(LavaAsset { inner: asset })) };
    LavaStatus::Ok
}

/// Decodes a `.lava` file from disk into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lava_asset_load(path: *const c_char, out: *mut *mut LavaAsset) -> LavaStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(LavaStatus::NullArgument, "path and out must not be NULL");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(LavaStatus::InvalidArgument, "path is not UTF-8");
        };
        let bytes = match std::fs::read(Path::new(path)) {
            Ok(b) => b,
            Err(e) => return fail(LavaStatus::Io, format!("{path}: {e}")),
        };
        match decode_asset(&bytes) {
            Ok(a) => store_asset(a, out),
            Err(e) => fail(LavaStatus::Codec, e.to_string()),
        }
    })
}

/// Decodes a `.lava` image held in memory into `*out`.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lava_asset_decode(bytes: *const u8, len: usize, out: *mut *mut LavaAsset) -> LavaStatus {
    guard(|| {
        if bytes.is_null() || out.is_null() {
            return fail(LavaStatus::NullArgument, "bytes and out must not be NULL");
        }
        match decode_asset(std::slice::from_raw_parts(bytes, len)) {
            Ok(a) => store_asset(a, out),
            Err(e) => fail(LavaStatus::Codec, e.to_string()),
        }
    })
}

/// # Safety
/// `asset` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lava_asset_free(asset: *mut LavaAsset) {
    if !asset.is_null() {
        drop(Box::from_raw(asset));
    }
}

/// # Safety
/// `asset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lava_asset_info(asset: *const LavaAsset, out: *mut LavaAssetInfo) -> LavaStatus {
    guard(|| {
        let (Some(asset), false) = (asset.as_ref(), out.is_null()) else {
            return fail(LavaStatus::NullArgument, "asset and out must not be NULL");
        };
        let m = asset.inner.meta();
        let (rows, cols) = asset.inner.mesh().grid();
        *out = LavaAssetInfo {
            layers: m.layers as u32,
            warp_basis: m.warp_basis as u32,
            tex_basis: m.tex_basis as u32,
            params: m.params as u32,
            grid_rows: rows,
            grid_cols: cols,
            tex_res: asset.inner.textures().res() as u32,
            warp_res: asset.inner.warps().res() as u32,
            has_specular: asset.inner.textures().has_specular(),
            scene_center: asset.inner.scene_center().to_f32(),
        };
        LavaStatus::Ok
    })
}

fn camera(c: &LavaCamera) -> Result<Camera, LavaStatus> {
    Camera::new(
        Vec3::from_array(c.position),
        Vec3::from_array(c.target),
        Vec3::from_array(c.up),
        c.fov_y_deg.to_radians(),
        c.width,
        c.height,
        c.near_plane,
        c.far_plane,
    )
    .map_err(|e| fail(LavaStatus::InvalidArgument, e.to_string()))
}

unsafe fn param_slice<'a>(values: *const f32, count: usize) -> Result<&'a [f32], LavaStatus> {
    if values.is_null() && count > 0 {
        return Err(fail(LavaStatus::NullArgument, "params must not be NULL"));
    }
    Ok(if count == 0 { &[] } else { std::slice::from_raw_parts(values, count) })
}

/// Renders one frame for `param_count` expression values into `*out`.
///
/// # Safety
/// `asset` must be a live handle, `params` must point to `param_count`
/// floats, `cam` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lava_render(
    asset: *const LavaAsset,
    params: *const f32,
    param_count: usize,
    cam: *const LavaCamera,
    mode: LavaBlendMode,
    out: *mut *mut LavaFrame,
) -> LavaStatus {
    guard(|| {
        let (Some(asset), Some(cam), false) = (asset.as_ref(), cam.as_ref(), out.is_null()) else {
            return fail(LavaStatus::NullArgument, "asset, camera and out must not be NULL");
        };
        let values = match param_slice(params, param_count) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let camera = match camera(cam) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let expression = match ExpressionParams::from_f32(values) {
            Ok(p) => p,
            Err(e) => return fail(LavaStatus::InvalidArgument, e.to_string()),
        };
        let options = RenderOptions {
            mode: match mode {
                LavaBlendMode::Prebaked => BlendMode::Prebaked,
                LavaBlendMode::Fused => BlendMode::Fused,
            },
            ..RenderOptions::default()
        };
        match render(&asset.inner, &expression, &camera, &options) {
            Ok(frame) => {
                *out = Box::into_raw(Box::new(LavaFrame { inner: frame }));
                LavaStatus::Ok
            }
            Err(e) => {
                let e = Error::from(e);
                fail(status_of(&e), e.to_string())
            }
        }
    })
}

/// # Safety
/// `frame` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lava_frame_free(frame: *mut LavaFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Writes the frame size; either pointer may be NULL.
///
/// # Safety
/// `frame` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lava_frame_size(frame: *const LavaFrame, width: *mut u32, height: *mut u32) -> LavaStatus {
    guard(|| {
        let Some(frame) = frame.as_ref() else {
            return fail(LavaStatus::NullArgument, "frame must not be NULL");
        };
        if let Some(w) = width.as_mut() {
            *w = frame.inner.image.width();
        }
        if let Some(h) = height.as_mut() {
            *h = frame.inner.image.height();
        }
        LavaStatus::Ok
    })
}

/// Copies the row-major RGB8 pixels (`width * height * 3` bytes).
///
/// # Safety
/// `frame` must be a live handle; `buf` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lava_frame_copy_rgb(frame: *const LavaFrame, buf: *mut u8, len: usize) -> LavaStatus {
    guard(|| {
        let (Some(frame), false) = (frame.as_ref(), buf.is_null()) else {
            return fail(LavaStatus::NullArgument, "frame and buf must not be NULL");
        };
        let data = frame.inner.image.data();
        if len < data.len() {
            return fail(LavaStatus::BufferTooSmall, format!("need {} bytes, got {len}", data.len()));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        LavaStatus::Ok
    })
}

/// Copies the per-pixel residual transmittance (`width * height` floats).
///
/// # Safety
/// `frame` must be a live handle; `buf` must hold `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn lava_frame_copy_transmittance(frame: *const LavaFrame, buf: *mut f32, len: usize) -> LavaStatus {
    guard(|| {
        let (Some(frame), false) = (frame.as_ref(), buf.is_null()) else {
            return fail(LavaStatus::NullArgument, "frame and buf must not be NULL");
        };
        let t = &frame.inner.transmittance;
        if len < t.len() {
            return fail(LavaStatus::BufferTooSmall, format!("need {} floats, got {len}", t.len()));
        }
        ptr::copy_nonoverlapping(t.as_ptr(), buf, t.len());
        LavaStatus::Ok
    })
}

/// Encodes a frame packet into `buf`; `*written` receives its length.
/// `pose` may be NULL.
///
/// # Safety
/// `params` must point to `param_count` floats, `buf` to `len` writable
/// bytes, and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lava_encode_frame_packet(
    frame_index: u32,
    params: *const f32,
    param_count: usize,
    pose: *const LavaPose,
    buf: *mut u8,
    len: usize,
    written: *mut usize,
) -> LavaStatus {
    guard(|| {
        if buf.is_null() || written.is_null() {
            return fail(LavaStatus::NullArgument, "buf and written must not be NULL");
        }
        let values = match param_slice(params, param_count) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let packet = FramePacket {
            frame: frame_index,
            params: values.to_vec(),
            pose: pose.as_ref().map(|p| Pose { translation: p.translation, rotation: p.rotation }),
        };
        let bytes = match encode_frame(&packet) {
            Ok(b) => b,
            Err(e) => return fail(LavaStatus::InvalidArgument, e.to_string()),
        };
        if len < bytes.len() {
            return fail(LavaStatus::BufferTooSmall, format!("need {} bytes, got {len}", bytes.len()));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        *written = bytes.len();
        LavaStatus::Ok
    })
}
