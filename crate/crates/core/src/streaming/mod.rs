//! Incremental real-time inference: per-session buffers, context-window-
//! limited forward passes, RTF measurement, and the wire protocol.

mod rtf;
mod server;
mod session;

pub use rtf::{measure_rtf, RtfReport, MIN_RTF_SECS};
pub use server::{encode_out, handle_line, serve, serve_on_listener, Endpoint, OutMsg};
pub use session::{PredictionFrame, StreamSession};

use thiserror::Error;

use crate::audio::AudioError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("session is closed")]
    SessionClosed,
    #[error("bad chunk: {0}")]
    BadChunk(String),
    #[error("audio too short: {got:.1}s, need >= {need:.0}s")]
    AudioTooShort { got: f64, need: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bind failed: {0}")]
    Bind(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
