// SPDX-License-Identifier: Apache-2.0

//! C interface over the client library. See `docs/dw2.h`.
//!
//! Every function returns 0 on success or a negative `DW2_E*` code; the
//! message of the last failure on the calling thread is available from
//! `dw2_last_error`. Handles are opaque heap objects owned by the caller
//! until passed to their free/disconnect function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};

use crate::client::{query_info, ClientError, ClientOptions, ClientSession, WallInfo};
use crate::codec::Quality;
use crate::PixelBuffer;

pub const DW2_OK: c_int = 0;
pub const DW2_EINVAL: c_int = -1;
pub const DW2_EUNREACHABLE: c_int = -2;
pub const DW2_EREJECTED: c_int = -3;
pub const DW2_EFRAME: c_int = -4;
pub const DW2_ECLOSED: c_int = -5;
pub const DW2_EINTERNAL: c_int = -6;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(code: c_int, message: impl ToString) -> c_int {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
    code
}

fn code_of(e: &ClientError) -> c_int {
    match e {
        ClientError::Unreachable { .. } | ClientError::Io(_) | ClientError::MalformedReply(_) | ClientError::Group(_) => {
            DW2_EUNREACHABLE
        }
        ClientError::Rejected => DW2_EREJECTED,
        ClientError::NotAdmitted(_) | ClientError::OutOfBounds { .. } => DW2_EFRAME,
        ClientError::SessionClosed(_) => DW2_ECLOSED,
        ClientError::InvalidArgument(_) => DW2_EINVAL,
        ClientError::Codec(_) => DW2_EINTERNAL,
    }
}

fn client_fail(e: ClientError) -> c_int {
    fail(code_of(&e), e)
}

/// Opaque wall description.
pub struct Dw2WallInfo(WallInfo);

/// Opaque client session.
pub struct Dw2Session(ClientSession);

/// Message of the last failure on this thread; valid until the next call
/// on the same thread. Never NULL.
#[no_mangle]
pub extern "C" fn dw2_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `host` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dw2_query_info(host: *const c_char, port: u16, out: *mut *mut Dw2WallInfo) -> c_int {
    if host.is_null() || out.is_null() {
        return fail(DW2_EINVAL, "null argument");
    }
    let Ok(host) = CStr::from_ptr(host).to_str() else {
        return fail(DW2_EINVAL, "host is not UTF-8");
    };
    match query_info(host, port) {
        Ok(info) => {
            *out = Box::into_raw(Box::new(Dw2WallInfo(info)));
            DW2_OK
        }
        Err(e) => client_fail(e),
    }
}

/// # Safety
/// `info` must come from `dw2_query_info`; out pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn dw2_wall_info_size(info: *const Dw2WallInfo, width: *mut u32, height: *mut u32) -> c_int {
    let Some(info) = info.as_ref() else {
        return fail(DW2_EINVAL, "null wall info");
    };
    if !width.is_null() {
        *width = info.0.virtual_width;
    }
    if !height.is_null() {
        *height = info.0.virtual_height;
    }
    DW2_OK
}

/// # Safety
/// `info` must come from `dw2_query_info` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dw2_free_wall_info(info: *mut Dw2WallInfo) {
    if !info.is_null() {
        drop(Box::from_raw(info));
    }
}

/// Joins the session as peer `rank` of `count`. `quality` is a JPEG
/// quality in 1..=100, or 0 for raw RGBA.
///
/// # Safety
/// `info` must come from `dw2_query_info`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dw2_connect(
    info: *const Dw2WallInfo,
    rank: u32,
    count: u32,
    quality: c_int,
    out: *mut *mut Dw2Session,
) -> c_int {
    let (Some(info), false) = (info.as_ref(), out.is_null()) else {
        return fail(DW2_EINVAL, "null argument");
    };
    let quality = match quality {
        0 => Quality::Raw,
        q => match u8::try_from(q).ok().map(Quality::jpeg) {
            Some(Ok(q)) => q,
            _ => return fail(DW2_EINVAL, format!("quality {q} outside 0..=100")),
        },
    };
    let options = ClientOptions {
        quality,
        ..Default::default()
    };
    match ClientSession::connect(&info.0, rank, count, options) {
        Ok(s) => {
            *out = Box::into_raw(Box::new(Dw2Session(s)));
            DW2_OK
        }
        Err(e) => client_fail(e),
    }
}

/// Blocks until the next frame is admitted and stores its id.
///
/// # Safety
/// `session` must come from `dw2_connect`; `frame` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dw2_begin_frame(session: *mut Dw2Session, frame: *mut u32) -> c_int {
    let (Some(s), false) = (session.as_mut(), frame.is_null()) else {
        return fail(DW2_EINVAL, "null argument");
    };
    match s.0.begin_frame() {
        Ok(f) => {
            *frame = f;
            DW2_OK
        }
        Err(e) => client_fail(e),
    }
}

/// Sends a `width` x `height` RGBA8 tile (rows tightly packed) placed at
/// (`x`, `y`) of the virtual framebuffer. The pixels are copied before the
/// call returns.
///
/// # Safety
/// `rgba` must point to `width * height * 4` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn dw2_send_rgba(
    session: *mut Dw2Session,
    frame: u32,
    rgba: *const u8,
    width: u32,
    height: u32,
    x: u32,
    y: u32,
) -> c_int {
    let (Some(s), false) = (session.as_mut(), rgba.is_null()) else {
        return fail(DW2_EINVAL, "null argument");
    };
    let len = width as usize * height as usize * 4;
    let bytes = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(rgba, len).to_vec() };
    let pixels = match PixelBuffer::from_rgba(width, height, bytes) {
        Ok(p) => p,
        Err(e) => return fail(DW2_EINVAL, e),
    };
    match s.0.send_rgba(frame, pixels, x, y) {
        Ok(()) => DW2_OK,
        Err(e) => client_fail(e),
    }
}

/// Flushes, leaves the session and frees the handle (also on failure).
///
/// # Safety
/// `session` must come from `dw2_connect` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dw2_disconnect(session: *mut Dw2Session) -> c_int {
    if session.is_null() {
        return fail(DW2_EINVAL, "null session");
    }
    let s = Box::from_raw(session);
    match s.0.disconnect() {
        Ok(_) => DW2_OK,
        Err(e) => client_fail(e),
    }
}
