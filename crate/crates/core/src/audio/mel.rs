//! Causal log-mel features.
//!
//! Frame `t` is computed from the 25 ms of samples ending at t/frame_rate
//! (exclusive), so a frame never sees audio from its own period or later.
//! The stream start is zero-padded, which makes frame 0 of any signal the
//! all-floor row.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use super::{AudioError, FeatureSequence};

/// Energy floor applied before the natural log.
pub const LOG_FLOOR: f32 = 1e-10;
/// Analysis window length in seconds.
pub const MEL_WINDOW_SECS: f64 = 0.025;

const FFT_SIZE: usize = 512;

/// Reusable extractor: Hann window, FFT plan, and mel filterbank.
pub struct MelExtractor {
    sample_rate: u32,
    frame_rate: u32,
    n_bands: usize,
    hop: usize,
    win: usize,
    window: Vec<f32>,
    // per band: (first fft bin, weights)
    filters: Vec<(usize, Vec<f32>)>,
    fft: Arc<dyn Fft<f32>>,
}

impl MelExtractor {
    pub fn new(sample_rate: u32, frame_rate: u32, n_bands: usize) -> Result<Self, AudioError> {
        if !matches!(frame_rate, 10 | 50) {
            return Err(AudioError::InvalidArgument(format!(
                "frame_rate must be 10 or 50 Hz, got {frame_rate}"
            )));
        }
        if n_bands < 8 {
            return Err(AudioError::InvalidArgument(format!(
                "n_bands must be >= 8, got {n_bands}"
            )));
        }
        let hop = (sample_rate / frame_rate) as usize;
        let win = (sample_rate as f64 * MEL_WINDOW_SECS).round() as usize;
        let window: Vec<f32> = (0..win)
            .map(|i| {
                0.5 - 0.5 * (2.0 * std::f32::consts::PI * i as f32 / (win - 1) as f32).cos()
            })
            .collect();
        let filters = mel_filterbank(sample_rate, n_bands);
        let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
        Ok(Self { sample_rate, frame_rate, n_bands, hop, win, window, filters, fft })
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn frame_rate(&self) -> u32 {
        self.frame_rate
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window_len(&self) -> usize {
        self.win
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        num_samples / self.hop
    }

    /// Log-mel row for frame `t`: samples [t*hop - win, t*hop), zero-padded
    /// on the left at stream start.
    pub fn frame(&self, samples: &[f32], t: usize) -> Vec<f32> {
        let end = t as i64 * self.hop as i64;
        let window: Vec<f32> = (0..self.win)
            .map(|i| {
                let idx = end - self.win as i64 + i as i64;
                if idx >= 0 && (idx as usize) < samples.len() {
                    samples[idx as usize]
                } else {
                    0.0
                }
            })
            .collect();
        self.frame_from_window(&window)
    }

    /// Log-mel row from exactly `window_len()` samples (the window ending at
    /// the frame's start boundary). Both the offline extractor and the
    /// streaming runtime go through this method, so their values agree
    /// bit for bit.
    pub fn frame_from_window(&self, window: &[f32]) -> Vec<f32> {
        debug_assert_eq!(window.len(), self.win);
        let mut buf = vec![Complex32::new(0.0, 0.0); FFT_SIZE];
        for i in 0..self.win {
            buf[i].re = window[i] * self.window[i];
        }
        self.fft.process(&mut buf);
        let power: Vec<f32> =
            buf[..FFT_SIZE / 2 + 1].iter().map(|c| c.re * c.re + c.im * c.im).collect();
        self.filters
            .iter()
            .map(|(start, ws)| {
                let e: f32 = ws.iter().enumerate().map(|(j, w)| w * power[start + j]).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect()
    }

    pub fn extract(&self, samples: &[f32], channel_id: usize) -> Result<FeatureSequence, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        let t_max = self.num_frames(samples.len());
        let mut frames = Array2::<f32>::zeros((t_max, self.n_bands));
        for t in 0..t_max {
            let row = self.frame(samples, t);
            frames.row_mut(t).iter_mut().zip(row).for_each(|(dst, v)| *dst = v);
        }
        Ok(FeatureSequence { frames, frame_rate: self.frame_rate, channel_id })
    }

    /// Band edge frequencies in Hz (n_bands + 2 points).
    pub fn band_edges(&self) -> Vec<f64> {
        mel_edges(self.sample_rate, self.n_bands)
    }
}

/// One-shot log-mel extraction for a single channel.
pub fn log_mel(
    samples: &[f32],
    sample_rate: u32,
    frame_rate: u32,
    n_bands: usize,
) -> Result<FeatureSequence, AudioError> {
    MelExtractor::new(sample_rate, frame_rate, n_bands)?.extract(samples, 0)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Band edge frequencies in Hz: n_bands + 2 points, mel-spaced over [0, sr/2].
fn mel_edges(sample_rate: u32, n_bands: usize) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_bands + 2).map(|i| mel_to_hz(top * i as f64 / (n_bands + 1) as f64)).collect()
}

fn mel_filterbank(sample_rate: u32, n_bands: usize) -> Vec<(usize, Vec<f32>)> {
    let edges = mel_edges(sample_rate, n_bands);
    let bin_hz = sample_rate as f64 / FFT_SIZE as f64;
    let n_bins = FFT_SIZE / 2 + 1;
    (0..n_bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let mut start = None;
            let mut ws = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f >= lo && f <= mid && mid > lo {
                    (f - lo) / (mid - lo)
                } else if f > mid && f <= hi && hi > mid {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                if w > 0.0 {
                    if start.is_none() {
                        start = Some(k);
                    }
                    ws.push(w as f32);
                } else if start.is_some() {
                    break;
                }
            }
            (start.unwrap_or(0), ws)
        })
        .collect()
}

/// Index of the band with the largest filter weight at `hz`.
pub fn mel_band_for_hz(sample_rate: u32, n_bands: usize, hz: f64) -> usize {
    let edges = mel_edges(sample_rate, n_bands);
    let mut best = (0usize, f64::MIN);
    for b in 0..n_bands {
        let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        let w = if hz >= lo && hz <= mid && mid > lo {
            (hz - lo) / (mid - lo)
        } else if hz > mid && hz <= hi && hi > mid {
            (hi - hz) / (hi - mid)
        } else {
            0.0
        };
        if w > best.1 {
            best = (b, w);
        }
    }
    best.0
}
