//! Intensity flattening and the RMS contour used to verify it.

use super::{AudioError, StereoAudio};

/// RMS below which a window counts as silence and is left untouched.
const SILENCE_RMS: f32 = 1e-4;

/// Rescale one channel so every non-silent window has the channel's global
/// RMS. Gains are constant per window, which makes the manipulation exactly
/// idempotent; silent windows keep gain 1 so pauses stay pauses. The other
/// channel is returned untouched.
pub fn flatten_intensity(
    audio: &StereoAudio,
    channel: usize,
    window_ms: f64,
) -> Result<StereoAudio, AudioError> {
    if channel > 1 {
        return Err(AudioError::InvalidArgument(format!("channel must be 0 or 1, got {channel}")));
    }
    if window_ms <= 0.0 {
        return Err(AudioError::InvalidArgument("window_ms must be > 0".into()));
    }
    let sr = audio.sample_rate();
    let x = audio.channel(channel);
    let n = x.len();
    let win = ((window_ms / 1000.0) * sr as f64).round().max(1.0) as usize;
    if n == 0 {
        return Ok(audio.clone());
    }

    let global_rms = rms(x);
    let n_windows = n.div_ceil(win);
    let gains: Vec<f32> = (0..n_windows)
        .map(|w| {
            let seg = &x[w * win..((w + 1) * win).min(n)];
            let r = rms(seg);
            if r < SILENCE_RMS || global_rms < SILENCE_RMS {
                1.0
            } else {
                global_rms / r
            }
        })
        .collect();

    let mut out = x.to_vec();
    for (i, sample) in out.iter_mut().enumerate() {
        *sample *= gains[i / win];
    }

    let mut result = audio.clone();
    *result.channel_mut(channel) = out;
    Ok(result)
}

/// Non-overlapping RMS contour: one value per whole hop.
pub fn rms_contour(samples: &[f32], hop_secs: f64, sample_rate: u32) -> Result<Vec<f32>, AudioError> {
    if samples.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    if hop_secs <= 0.0 {
        return Err(AudioError::InvalidArgument("hop must be > 0".into()));
    }
    let hop = ((hop_secs * sample_rate as f64).round()).max(1.0) as usize;
    Ok(samples.chunks_exact(hop).map(rms).collect())
}

fn rms(xs: &[f32]) -> f32 {
    if xs.is_empty() {
        return 0.0;
    }
    let sum: f64 = xs.iter().map(|&x| (x as f64) * (x as f64)).sum();
    ((sum / xs.len() as f64) as f32).sqrt()
}
