//! Audio ingestion, framing, feature extraction, and intensity manipulation.
//!
//! All audio in this crate is two-channel 16 kHz PCM with amplitudes in
//! [-1, 1]. Channel 0 carries the speaker (user), channel 1 the listener
//! (the side whose backchannels are predicted).

mod intensity;
mod mel;
mod wav;

pub use intensity::{flatten_intensity, rms_contour};
pub use mel::{log_mel, mel_band_for_hz, MelExtractor, LOG_FLOOR, MEL_WINDOW_SECS};
pub use wav::{read_wav_stereo, write_wav_stereo, WavEncoding};

use thiserror::Error;

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("empty audio")]
    EmptyAudio,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Two equal-length channels of finite amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct StereoAudio {
    samples: [Vec<f32>; 2],
    sample_rate: u32,
}

impl StereoAudio {
    pub fn new(ch0: Vec<f32>, ch1: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidArgument("sample_rate must be > 0".into()));
        }
        if ch0.len() != ch1.len() {
            return Err(AudioError::InvalidArgument(format!(
                "channel lengths differ: {} vs {}",
                ch0.len(),
                ch1.len()
            )));
        }
        for ch in [&ch0, &ch1] {
            if ch.iter().any(|x| !x.is_finite()) {
                return Err(AudioError::InvalidArgument("non-finite sample".into()));
            }
        }
        Ok(Self { samples: [ch0, ch1], sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: [vec![0.0; len], vec![0.0; len]], sample_rate }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.samples[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut Vec<f32> {
        &mut self.samples[c]
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

/// A T x D feature matrix at a fixed frame rate, attributed to one channel.
///
/// Frame `t` is computed only from samples at time <= t/frame_rate; the
/// stream start is zero-padded so frame 0 exists.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: ndarray::Array2<f32>,
    pub frame_rate: u32,
    pub channel_id: usize,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Number of whole frames in `duration` seconds at `frame_rate`.
pub fn frame_count(num_samples: usize, sample_rate: u32, frame_rate: u32) -> usize {
    // T = floor(duration * frame_rate), computed in integer arithmetic:
    // one frame per completed hop of sample_rate / frame_rate samples.
    let hop = (sample_rate / frame_rate) as usize;
    num_samples / hop
}
