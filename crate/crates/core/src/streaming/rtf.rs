//! Real-time factor measurement.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::audio::StereoAudio;
use crate::model::VapModel;

use super::{StreamError, StreamSession};

/// Minimum audio length for a meaningful measurement.
pub const MIN_RTF_SECS: f64 = 60.0;

#[derive(Debug, Clone, Serialize)]
pub struct RtfReport {
    pub context_secs: f64,
    pub audio_secs: f64,
    pub wall_secs: f64,
    /// wall_secs / audio_secs; below 1 means faster than real time.
    pub rtf: f64,
    pub frames: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

/// Feed `audio` frame-period by frame-period through a fresh session on the
/// current thread, timing each push. An untimed warm-up pass runs first.
pub fn measure_rtf(
    model: &Arc<VapModel<f32>>,
    audio: &StereoAudio,
    context_secs: f64,
    listener: usize,
) -> Result<RtfReport, StreamError> {
    let audio_secs = audio.duration_secs();
    if audio_secs < MIN_RTF_SECS {
        return Err(StreamError::AudioTooShort { got: audio_secs, need: MIN_RTF_SECS });
    }
    let hop = (audio.sample_rate() / model.config().frame_rate) as usize;

    // Warm-up: exercise allocation paths and branch caches, untimed.
    {
        let mut warm = StreamSession::new(model.clone(), context_secs, listener)?;
        let warm_samples = (audio.len() / 4).max(hop * model.config().frame_rate as usize * 10);
        let end = warm_samples.min(audio.len());
        warm.push_audio(&audio.channel(0)[..end], &audio.channel(1)[..end])?;
    }

    let mut session = StreamSession::new(model.clone(), context_secs, listener)?;
    let mut latencies_ms = Vec::with_capacity(audio.len() / hop + 1);
    let started = Instant::now();
    let mut pos = 0usize;
    while pos + hop <= audio.len() {
        let t0 = Instant::now();
        let frames =
            session.push_audio(&audio.channel(0)[pos..pos + hop], &audio.channel(1)[pos..pos + hop])?;
        let dt = t0.elapsed().as_secs_f64() * 1000.0;
        if !frames.is_empty() {
            latencies_ms.push(dt);
        }
        pos += hop;
    }
    let wall_secs = started.elapsed().as_secs_f64();

    latencies_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |q: f64| -> f64 {
        if latencies_ms.is_empty() {
            return 0.0;
        }
        let idx = ((latencies_ms.len() as f64 * q) as usize).min(latencies_ms.len() - 1);
        latencies_ms[idx]
    };
    Ok(RtfReport {
        context_secs,
        audio_secs,
        wall_secs,
        rtf: wall_secs / audio_secs,
        frames: latencies_ms.len(),
        p50_ms: pct(0.50),
        p95_ms: pct(0.95),
        max_ms: latencies_ms.last().copied().unwrap_or(0.0),
    })
}
