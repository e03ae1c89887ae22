//! C ABI for embedding the backchannel predictor in other runtimes.
//!
//! Usage pattern: load a checkpoint into an opaque model handle, open one
//! streaming session per dialogue, push interleaved-free stereo PCM, and
//! poll prediction frames. All functions return [`VapbcStatus`]; on failure
//! the thread-local message from [`vapbc_last_error`] carries details.
//!
//! Handles are not thread-safe individually (one session per thread), but a
//! single model handle may back many sessions concurrently.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::CStr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use libc::{c_char, size_t};

use vapbc::model::{load_checkpoint, VapModel};
use vapbc::streaming::{PredictionFrame, StreamSession};

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VapbcStatus {
    Ok = 0,
    /// File could not be read or written.
    Io = 1,
    /// The checkpoint is malformed or of an unsupported version.
    BadCheckpoint = 2,
    /// An argument was null, out of range, or inconsistent.
    InvalidArgument = 3,
    /// The session was closed.
    SessionClosed = 4,
    /// Unexpected internal failure (a panic was caught at the boundary).
    Internal = 5,
}

/// Opaque model handle (a loaded checkpoint).
pub struct VapbcModel {
    inner: Arc<VapModel<f32>>,
}

/// Opaque streaming session handle.
pub struct VapbcSession {
    session: StreamSession,
    model: Arc<VapModel<f32>>,
    context_secs: f64,
    listener: usize,
    pending: VecDeque<PredictionFrame>,
}

/// One emitted prediction frame. Fields that do not exist for the loaded
/// checkpoint (for example `p_continuer` on a binary-task model) are -1.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VapbcPrediction {
    /// Frame start time in seconds.
    pub t: f64,
    /// Backchannel probability.
    pub p_bc: f64,
    pub p_continuer: f64,
    pub p_assessment: f64,
    /// Current voice-activity probability per channel.
    pub p_vad: [f64; 2],
    /// Backchannel score read directly off the projection distribution.
    pub zero_shot: f64,
    /// Most likely future-activity state (0-255), or -1.
    pub vap_top_state: i32,
}

impl From<PredictionFrame> for VapbcPrediction {
    fn from(f: PredictionFrame) -> Self {
        Self {
            t: f.t,
            p_bc: f.p_bc.unwrap_or(-1.0),
            p_continuer: f.p_continuer.unwrap_or(-1.0),
            p_assessment: f.p_assessment.unwrap_or(-1.0),
            p_vad: f.p_vad.unwrap_or([-1.0, -1.0]),
            zero_shot: f.zero_shot.unwrap_or(-1.0),
            vap_top_state: f.vap_top_state.map(|s| s as i32).unwrap_or(-1),
        }
    }
}

fn guard<F: FnOnce() -> VapbcStatus>(f: F) -> VapbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic at the ffi boundary");
            VapbcStatus::Internal
        }
    }
}

/// Load a checkpoint from `path` into a new model handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out_model` a valid
/// pointer; the returned handle must be released with [`vapbc_model_free`].
#[no_mangle]
pub unsafe extern "C" fn vapbc_model_load(
    path: *const c_char,
    out_model: *mut *mut VapbcModel,
) -> VapbcStatus {
    guard(|| {
        if path.is_null() || out_model.is_null() {
            set_error("null pointer argument");
            return VapbcStatus::InvalidArgument;
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("path is not valid utf-8");
                return VapbcStatus::InvalidArgument;
            }
        };
        match load_checkpoint(Path::new(path)) {
            Ok(model) => {
                let handle = Box::new(VapbcModel { inner: Arc::new(model) });
                unsafe { *out_model = Box::into_raw(handle) };
                VapbcStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                match e {
                    vapbc::model::ModelError::Io(_) => VapbcStatus::Io,
                    _ => VapbcStatus::BadCheckpoint,
                }
            }
        }
    })
}

/// Release a model handle. Safe to call with null.
///
/// # Safety
/// `model` must come from [`vapbc_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vapbc_model_free(model: *mut VapbcModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Model frame rate in Hz (0 for a null handle).
///
/// # Safety
/// `model` must be a live handle from [`vapbc_model_load`].
#[no_mangle]
pub unsafe extern "C" fn vapbc_model_frame_rate(model: *const VapbcModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.config().frame_rate
}

/// Number of backchannel classes of the loaded head (0 = none, 2 = timing,
/// 3 = type). Returns 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle from [`vapbc_model_load`].
#[no_mangle]
pub unsafe extern "C" fn vapbc_model_bc_classes(model: *const VapbcModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.config().bc_classes as u32
}

/// Open a streaming session over `model` with a trailing context window of
/// `context_secs` seconds. `listener` is the channel whose backchannels are
/// predicted (0 or 1).
///
/// # Safety
/// `model` must be a live handle and `out_session` a valid pointer; release
/// the session with [`vapbc_session_free`].
#[no_mangle]
pub unsafe extern "C" fn vapbc_session_new(
    model: *const VapbcModel,
    context_secs: f64,
    listener: u32,
    out_session: *mut *mut VapbcSession,
) -> VapbcStatus {
    guard(|| {
        if model.is_null() || out_session.is_null() {
            set_error("null pointer argument");
            return VapbcStatus::InvalidArgument;
        }
        if listener > 1 {
            set_error("listener must be 0 or 1");
            return VapbcStatus::InvalidArgument;
        }
        let inner = unsafe { &*model }.inner.clone();
        match StreamSession::new(inner.clone(), context_secs, listener as usize) {
            Ok(session) => {
                let handle = Box::new(VapbcSession {
                    session,
                    model: inner,
                    context_secs,
                    listener: listener as usize,
                    pending: VecDeque::new(),
                });
                unsafe { *out_session = Box::into_raw(handle) };
                VapbcStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                VapbcStatus::InvalidArgument
            }
        }
    })
}

/// Release a session handle. Safe to call with null.
///
/// # Safety
/// `session` must come from [`vapbc_session_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vapbc_session_free(session: *mut VapbcSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}

/// Clear all session state; the next pushed sample restarts at t = 0.
///
/// # Safety
/// `session` must be a live handle from [`vapbc_session_new`].
#[no_mangle]
pub unsafe extern "C" fn vapbc_session_reset(session: *mut VapbcSession) -> VapbcStatus {
    guard(|| {
        if session.is_null() {
            set_error("null session");
            return VapbcStatus::InvalidArgument;
        }
        let handle = unsafe { &mut *session };
        match StreamSession::new(handle.model.clone(), handle.context_secs, handle.listener) {
            Ok(fresh) => {
                handle.session = fresh;
                handle.pending.clear();
                VapbcStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                VapbcStatus::Internal
            }
        }
    })
}

/// Push `len` samples per channel (16 kHz, [-1, 1]); completed frames are
/// queued for [`vapbc_session_poll`]. Chunks of any size are accepted.
///
/// # Safety
/// `pcm0` and `pcm1` must point to at least `len` readable floats, and
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vapbc_session_push(
    session: *mut VapbcSession,
    pcm0: *const f32,
    pcm1: *const f32,
    len: size_t,
) -> VapbcStatus {
    guard(|| {
        if session.is_null() || (len > 0 && (pcm0.is_null() || pcm1.is_null())) {
            set_error("null pointer argument");
            return VapbcStatus::InvalidArgument;
        }
        let handle = unsafe { &mut *session };
        let ch0 = unsafe { std::slice::from_raw_parts(pcm0, len) };
        let ch1 = unsafe { std::slice::from_raw_parts(pcm1, len) };
        match handle.session.push_audio(ch0, ch1) {
            Ok(frames) => {
                handle.pending.extend(frames);
                VapbcStatus::Ok
            }
            Err(vapbc::streaming::StreamError::SessionClosed) => {
                set_error("session closed");
                VapbcStatus::SessionClosed
            }
            Err(e) => {
                set_error(e.to_string());
                VapbcStatus::InvalidArgument
            }
        }
    })
}

/// Drain up to `max_frames` queued predictions into `out_frames`; the number
/// written is stored in `out_count`.
///
/// # Safety
/// `out_frames` must point to at least `max_frames` writable slots and
/// `out_count` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vapbc_session_poll(
    session: *mut VapbcSession,
    out_frames: *mut VapbcPrediction,
    max_frames: size_t,
    out_count: *mut size_t,
) -> VapbcStatus {
    guard(|| {
        if session.is_null() || out_count.is_null() || (max_frames > 0 && out_frames.is_null()) {
            set_error("null pointer argument");
            return VapbcStatus::InvalidArgument;
        }
        let handle = unsafe { &mut *session };
        let n = handle.pending.len().min(max_frames);
        for i in 0..n {
            let frame = handle.pending.pop_front().expect("bounded by len");
            unsafe { *out_frames.add(i) = frame.into() };
        }
        unsafe { *out_count = n };
        VapbcStatus::Ok
    })
}

/// Number of predictions waiting in the session queue.
///
/// # Safety
/// `session` must be a live handle from [`vapbc_session_new`].
#[no_mangle]
pub unsafe extern "C" fn vapbc_session_pending(session: *const VapbcSession) -> size_t {
    if session.is_null() {
        return 0;
    }
    unsafe { &*session }.pending.len()
}

/// Copy the thread-local message for the last failure into `buf` (always
/// NUL-terminated when `len > 0`) and return the full message length.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes (or be null with
/// `len == 0` to query the length).
#[no_mangle]
pub unsafe extern "C" fn vapbc_last_error(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}
