//! Frame-wise backchannel prediction on two-channel dialogue audio.
//!
//! The crate is organized around a voice-activity-projection model: a pluggable
//! per-channel audio encoder feeds a channel-wise Transformer and a
//! cross-attention Transformer, whose concatenated output drives three linear
//! heads (future voice-activity state, current voice activity, backchannel
//! class). Training happens in two stages (pre-training on general dialogue,
//! fine-tuning with a weighted multi-task loss); inference runs either offline
//! over files or incrementally in a streaming session with a bounded context
//! window.
//!
//! Module map:
//! - [`audio`]: WAV ingestion, log-mel features, intensity manipulation.
//! - [`state_codec`]: the 256-state future-activity projection codec.
//! - [`nn`]: a small reverse-mode autodiff engine over 2-D arrays.
//! - [`model`]: the network, forward/backward, checkpoints.
//! - [`labeling`]: per-frame supervision from annotations.
//! - [`synth`]: deterministic synthetic dialogue corpus generator.
//! - [`training`]: losses and the two-stage training loops.
//! - [`evaluation`]: frame-wise metrics, threshold sweeps, run reports.
//! - [`streaming`]: incremental sessions, RTF measurement, wire protocol.
//! - [`cli`]: the `vapbc` command line.

pub mod audio;
pub mod cli;
pub mod evaluation;
pub mod labeling;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod state_codec;
pub mod streaming;
pub mod synth;
pub mod training;

// pub use audio::{FeatureSequence, StereoAudio};
// pub use labeling::{BcEvent, BcKind, FrameLabels, Task};
// pub use model::{ModelConfig, ModelOutput, VapModel};
// pub use state_codec::{BinGrid, StateDistribution, VapState};
