//! Incremental per-session inference.
//!
//! A session buffers raw samples until a frame period completes, computes
//! that frame's log-mel row (window ending at the frame start, exactly like
//! the offline extractor), pushes the encoder forward by one frame, and
//! recomputes the Transformer over the trailing context window. The encoder
//! keeps full-history state (its receptive field is finite), while the
//! Transformer sees at most `context` seconds.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::audio::{MelExtractor, SAMPLE_RATE};
use crate::model::{ArchKind, EncoderKind, VapModel};
use crate::state_codec::zero_shot_bc_score;

use super::StreamError;

/// Conv-stack receptive field in frames: enc row t reads mel rows t-3..t.
const ENCODER_RF: usize = 4;

/// One emitted prediction.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PredictionFrame {
    /// Frame start time in seconds.
    pub t: f64,
    /// Probability of a backchannel (binary head: class 1; type head: sum of
    /// continuer and assessment).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_bc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_continuer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_assessment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_vad: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vap_top_state: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<f64>,
}

pub struct StreamSession {
    model: Arc<VapModel<f32>>,
    mel: MelExtractor,
    context_frames: usize,
    listener: usize,
    hop: usize,
    win: usize,
    /// Raw samples not yet folded into frames, with the absolute index of
    /// the first buffered sample.
    buf: [Vec<f32>; 2],
    buf_start: usize,
    received: usize,
    /// Last few raw mel rows per channel (encoder receptive field).
    mel_hist: [VecDeque<Vec<f32>>; 2],
    /// Encoder outputs over the trailing context window.
    enc_ring: [VecDeque<Array1<f32>>; 2],
    frames_emitted: u64,
    closed: bool,
}

impl StreamSession {
    pub fn new(
        model: Arc<VapModel<f32>>,
        context_secs: f64,
        listener: usize,
    ) -> Result<Self, StreamError> {
        if model.config().encoder != EncoderKind::Reference {
            return Err(StreamError::InvalidArgument(
                "streaming requires the reference encoder".into(),
            ));
        }
        let frame_rate = model.config().frame_rate;
        let context_frames = ((context_secs * frame_rate as f64).round() as usize).max(1);
        if model.config().arch == ArchKind::Vap && context_frames > model.config().max_context {
            return Err(StreamError::InvalidArgument(format!(
                "context of {context_frames} frames exceeds the model's max_context {}",
                model.config().max_context
            )));
        }
        let mel = MelExtractor::new(SAMPLE_RATE, frame_rate, model.config().n_bands)?;
        let hop = mel.hop();
        let win = mel.window_len();
        Ok(Self {
            model,
            mel,
            context_frames,
            listener,
            hop,
            win,
            buf: [Vec::new(), Vec::new()],
            buf_start: 0,
            received: 0,
            mel_hist: [VecDeque::new(), VecDeque::new()],
            enc_ring: [VecDeque::new(), VecDeque::new()],
            frames_emitted: 0,
            closed: false,
        })
    }

    pub fn frames_emitted(&self) -> u64 {
        self.frames_emitted
    }

    pub fn context_frames(&self) -> usize {
        self.context_frames
    }

    /// Buffered state sizes (samples per channel, encoder frames per
    /// channel); the memory-bound invariant is asserted on these.
    pub fn buffered(&self) -> (usize, usize) {
        (self.buf[0].len(), self.enc_ring[0].len())
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Feed a chunk of any length; returns predictions for every frame
    /// whose period completed.
    pub fn push_audio(
        &mut self,
        pcm0: &[f32],
        pcm1: &[f32],
    ) -> Result<Vec<PredictionFrame>, StreamError> {
        if self.closed {
            return Err(StreamError::SessionClosed);
        }
        if pcm0.len() != pcm1.len() {
            return Err(StreamError::BadChunk(format!(
                "channel lengths differ: {} vs {}",
                pcm0.len(),
                pcm1.len()
            )));
        }
        self.buf[0].extend_from_slice(pcm0);
        self.buf[1].extend_from_slice(pcm1);
        self.received += pcm0.len();

        let mut out = Vec::new();
        // Frame t is emitted once (t+1)*hop samples have arrived; its mel
        // window ends at t*hop.
        while self.received >= (self.frames_emitted as usize + 1) * self.hop {
            let t = self.frames_emitted as usize;
            out.push(self.step_frame(t)?);
            self.frames_emitted += 1;
            // Drop samples older than the next frame's window start.
            let keep_from = ((t + 1) * self.hop).saturating_sub(self.win);
            if keep_from > self.buf_start {
                let drop = keep_from - self.buf_start;
                for ch in &mut self.buf {
                    ch.drain(..drop);
                }
                self.buf_start = keep_from;
            }
        }
        Ok(out)
    }

    fn step_frame(&mut self, t: usize) -> Result<PredictionFrame, StreamError> {
        // Assemble the mel window [t*hop - win, t*hop) with stream-start
        // zero padding, from the trimmed buffer.
        for c in 0..2 {
            let mut window = vec![0.0f32; self.win];
            let end = t as i64 * self.hop as i64;
            for (i, slot) in window.iter_mut().enumerate() {
                let idx = end - self.win as i64 + i as i64;
                if idx >= 0 {
                    let rel = idx as usize - self.buf_start;
                    *slot = self.buf[c][rel];
                }
            }
            let row = self.mel.frame_from_window(&window);
            self.mel_hist[c].push_back(row);
            if self.mel_hist[c].len() > ENCODER_RF {
                self.mel_hist[c].pop_front();
            }
        }

        // Encoder over the receptive-field stack; the last row equals the
        // full-history encoder output for frame t.
        for c in 0..2 {
            let rows = &self.mel_hist[c];
            let stack = Array2::from_shape_fn((rows.len(), self.model.config().n_bands), |(i, j)| {
                rows[i][j]
            });
            let enc = self.model.encode_sequence(&stack)?;
            self.enc_ring[c].push_back(enc.row(enc.nrows() - 1).to_owned());
            if self.enc_ring[c].len() > self.context_frames {
                self.enc_ring[c].pop_front();
            }
        }

        let window_len = self.enc_ring[0].len();
        let d = self.model.config().d_channel;
        let stack = |ring: &VecDeque<Array1<f32>>| {
            Array2::from_shape_fn((window_len, d), |(i, j)| ring[i][j])
        };
        let enc0 = stack(&self.enc_ring[0]);
        let enc1 = stack(&self.enc_ring[1]);
        let logits = self.model.step_logits(enc0.view(), enc1.view())?;

        let frame_rate = self.model.config().frame_rate as f64;
        let mut frame = PredictionFrame {
            t: t as f64 / frame_rate,
            p_bc: None,
            p_continuer: None,
            p_assessment: None,
            p_vad: None,
            vap_top_state: None,
            zero_shot: None,
        };
        if let Some(bc) = &logits.bc {
            let probs = softmax_1d(bc);
            match probs.len() {
                2 => frame.p_bc = Some(probs[1]),
                3 => {
                    frame.p_continuer = Some(probs[1]);
                    frame.p_assessment = Some(probs[2]);
                    frame.p_bc = Some(probs[1] + probs[2]);
                }
                _ => {}
            }
        }
        if let Some(vad) = &logits.vad {
            frame.p_vad = Some([sigmoid(vad[0] as f64), sigmoid(vad[1] as f64)]);
        }
        if let Some(vap) = &logits.vap {
            let probs = softmax_1d(vap);
            let mut best = (0usize, f64::NEG_INFINITY);
            let mut dist = [0.0f64; 256];
            for (i, &p) in probs.iter().enumerate() {
                dist[i] = p;
                if p > best.1 {
                    best = (i, p);
                }
            }
            let sum: f64 = dist.iter().sum();
            for p in dist.iter_mut() {
                *p /= sum;
            }
            frame.vap_top_state = Some(best.0 as u16);
            let dist = crate::state_codec::StateDistribution::new(dist)
                .expect("normalized distribution");
            frame.zero_shot = Some(zero_shot_bc_score(&dist, self.listener));
        }
        Ok(frame)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_1d(row: &Array1<f32>) -> Vec<f64> {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
