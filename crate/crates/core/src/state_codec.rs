//! The 256-state future voice-activity codec.
//!
//! A state is 2 speakers x 4 future time bins of binary activity. Bit layout:
//! channel 0 occupies the high nibble, channel 1 the low nibble, and within a
//! nibble the nearest bin is the most significant bit, so
//! `index = sum bins[c][k] << (7 - (4c + k))`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("state index out of range: {0}")]
    OutOfRange(usize),
    #[error("invalid bin grid: {0}")]
    InvalidGrid(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// One projection state: per-channel, per-bin activity flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VapState {
    pub bins: [[bool; 4]; 2],
}

impl VapState {
    pub fn index(&self) -> u8 {
        encode_state(&self.bins)
    }
}

/// The four future intervals (ms) and the activity threshold that
/// discretizes coverage into a bin flag.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BinGrid {
    /// Bin boundaries in ms: bin k covers [boundaries[k], boundaries[k+1]).
    pub boundaries_ms: [u32; 5],
    /// Fraction of active frames within a bin required to set its flag.
    pub activity_threshold: f64,
}

impl Default for BinGrid {
    fn default() -> Self {
        Self { boundaries_ms: [0, 200, 600, 1200, 2000], activity_threshold: 0.5 }
    }
}

impl BinGrid {
    pub fn validate(&self) -> Result<(), CodecError> {
        if !self.boundaries_ms.windows(2).all(|w| w[0] < w[1]) {
            return Err(CodecError::InvalidGrid("boundaries must be strictly increasing".into()));
        }
        if !(0.0..=1.0).contains(&self.activity_threshold) {
            return Err(CodecError::InvalidGrid("activity_threshold must be in [0,1]".into()));
        }
        Ok(())
    }

    pub fn horizon_ms(&self) -> u32 {
        self.boundaries_ms[4]
    }

    /// Bin boundaries converted to whole frame offsets at `frame_rate`.
    pub fn frame_boundaries(&self, frame_rate: u32) -> Result<[usize; 5], CodecError> {
        let mut out = [0usize; 5];
        for (i, &ms) in self.boundaries_ms.iter().enumerate() {
            let frames = ms as u64 * frame_rate as u64;
            if frames % 1000 != 0 {
                return Err(CodecError::InvalidGrid(format!(
                    "boundary {ms} ms is not a whole frame at {frame_rate} Hz"
                )));
            }
            out[i] = (frames / 1000) as usize;
        }
        Ok(out)
    }

    pub fn horizon_frames(&self, frame_rate: u32) -> usize {
        (self.horizon_ms() as u64 * frame_rate as u64 / 1000) as usize
    }
}

/// A normalized distribution over the 256 states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    probs: [f64; 256],
}

impl StateDistribution {
    pub fn new(probs: [f64; 256]) -> Result<Self, CodecError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(CodecError::InvalidDistribution("negative or non-finite mass".into()));
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(CodecError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn point_mass(index: usize) -> Result<Self, CodecError> {
        if index > 255 {
            return Err(CodecError::OutOfRange(index));
        }
        let mut probs = [0.0; 256];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self { probs: [1.0 / 256.0; 256] }
    }

    pub fn probs(&self) -> &[f64; 256] {
        &self.probs
    }
}

pub fn encode_state(bins: &[[bool; 4]; 2]) -> u8 {
    let mut index = 0u8;
    for (c, row) in bins.iter().enumerate() {
        for (k, &on) in row.iter().enumerate() {
            if on {
                index |= 1 << (7 - (4 * c + k));
            }
        }
    }
    index
}

pub fn decode_state(index: usize) -> Result<VapState, CodecError> {
    if index > 255 {
        return Err(CodecError::OutOfRange(index));
    }
    let mut bins = [[false; 4]; 2];
    for (c, row) in bins.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = (index >> (7 - (4 * c + k))) & 1 == 1;
        }
    }
    Ok(VapState { bins })
}

/// Discretize the next two seconds of voice activity, as seen from frame `t`.
///
/// Bin k of channel c is set when the fraction of active frames in
/// [t + lo_k, t + hi_k) reaches the grid threshold. Frames past the end of a
/// track count as inactive.
pub fn project_future_activity(
    vad: &[Vec<bool>; 2],
    t: usize,
    frame_rate: u32,
    grid: &BinGrid,
) -> Result<VapState, CodecError> {
    grid.validate()?;
    let bounds = grid.frame_boundaries(frame_rate)?;
    let mut bins = [[false; 4]; 2];
    for (c, track) in vad.iter().enumerate() {
        for k in 0..4 {
            let (lo, hi) = (t + bounds[k], t + bounds[k + 1]);
            let width = hi - lo;
            if width == 0 {
                continue;
            }
            let active = (lo..hi).filter(|&s| track.get(s).copied().unwrap_or(false)).count();
            bins[c][k] = active as f64 / width as f64 >= grid.activity_threshold;
        }
    }
    Ok(VapState { bins })
}

/// Probability that `channel`'s activity flag is set in `bin`.
pub fn bin_marginal(dist: &StateDistribution, channel: usize, bin: usize) -> f64 {
    let bit = 7 - (4 * channel + bin);
    dist.probs
        .iter()
        .enumerate()
        .filter(|(s, _)| (s >> bit) & 1 == 1)
        .map(|(_, &p)| p)
        .sum()
}

/// Backchannel likelihood read directly off a state distribution: immediate
/// listener activity (bins 0-2, averaged) plus late speaker activity (bin 3),
/// normalized to [0, 1] by averaging the two terms.
pub fn zero_shot_bc_score(dist: &StateDistribution, listener: usize) -> f64 {
    let speaker = 1 - listener;
    let listener_near = (0..3).map(|k| bin_marginal(dist, listener, k)).sum::<f64>() / 3.0;
    let speaker_late = bin_marginal(dist, speaker, 3);
    (listener_near + speaker_late) / 2.0
}
