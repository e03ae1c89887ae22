//! The combined training loss: projection cross-entropy, voice-activity
//! binary cross-entropy, and class-weighted backchannel cross-entropy over
//! unmasked frames.

use std::sync::Arc;

use ndarray::Array2;

use crate::labeling::FrameLabels;
use crate::model::{HeadNodes, ModelOutput};
use crate::nn::{NodeId, Scalar, Tape};

use super::{TrainError, Weights};

/// Per-term values and the weighted total. `total` is always the exact f64
/// expression `alpha * l_vap + beta * l_vad + gamma * l_bc`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub l_vap: f64,
    pub l_vad: f64,
    pub l_bc: f64,
    pub total: f64,
    pub vap_frames: usize,
    pub vad_frames: usize,
    /// Unmasked frames contributing to the backchannel term.
    pub bc_frames: usize,
    /// Set when every frame was masked and l_bc was defined as 0.
    pub all_bc_masked: bool,
}

impl LossBreakdown {
    fn assemble(
        weights: &Weights,
        l_vap: f64,
        l_vad: f64,
        l_bc: f64,
        frames: (usize, usize, usize),
        all_bc_masked: bool,
    ) -> Self {
        Self {
            l_vap,
            l_vad,
            l_bc,
            total: weights.alpha * l_vap + weights.beta * l_vad + weights.gamma * l_bc,
            vap_frames: frames.0,
            vad_frames: frames.1,
            bc_frames: frames.2,
            all_bc_masked,
        }
    }
}

/// Backchannel per-frame loss weights and their sum: `positive_weight` on
/// classes != 0, 1 on class 0, 0 on masked frames. The loss normalizes by
/// the weight sum rather than the frame count.
pub fn bc_frame_weights<F: Scalar>(
    labels: &FrameLabels,
    positive_weight: f64,
) -> (Vec<F>, f64, usize) {
    let mut weights = Vec::with_capacity(labels.len());
    let mut sum = 0.0f64;
    let mut frames = 0usize;
    for (&class, &mask) in labels.bc_class.iter().zip(&labels.bc_mask) {
        let w = if !mask {
            0.0
        } else if class != 0 {
            positive_weight
        } else {
            1.0
        };
        if w > 0.0 {
            frames += 1;
        }
        sum += w;
        weights.push(F::from(w).unwrap());
    }
    (weights, sum, frames)
}

fn validate_lengths<F: Scalar>(
    outputs: &ModelOutput<F>,
    labels: &FrameLabels,
) -> Result<usize, TrainError> {
    let t = outputs.len();
    if t != labels.len() {
        return Err(TrainError::LengthMismatch(format!(
            "outputs {} frames, labels {}",
            t,
            labels.len()
        )));
    }
    Ok(t)
}

/// Pure loss computation from realized outputs. This is the reference
/// implementation the tape-graph loss is tested against.
pub fn compute_loss<F: Scalar>(
    outputs: &ModelOutput<F>,
    labels: &FrameLabels,
    weights: &Weights,
) -> Result<LossBreakdown, TrainError> {
    let t = validate_lengths(outputs, labels)?;

    let mut l_vap = 0.0f64;
    let mut vap_frames = 0usize;
    if weights.alpha != 0.0 || outputs.vap_logits.is_some() {
        let logits = outputs
            .vap_logits
            .as_ref()
            .ok_or_else(|| TrainError::InvalidConfig("vap loss needs a projection head".into()))?;
        for (ti, row) in logits.rows().into_iter().enumerate() {
            let target = labels.vap_state[ti] as usize;
            l_vap += row_cross_entropy(row, target);
        }
        vap_frames = t;
        if t > 0 {
            l_vap /= t as f64;
        }
    }

    let mut l_vad = 0.0f64;
    let mut vad_frames = 0usize;
    if weights.beta != 0.0 || outputs.vad_logits.is_some() {
        let logits = outputs
            .vad_logits
            .as_ref()
            .ok_or_else(|| TrainError::InvalidConfig("vad loss needs a vad head".into()))?;
        for (ti, row) in logits.rows().into_iter().enumerate() {
            for c in 0..2 {
                let x = row[c].to_f64().unwrap();
                let y = if labels.vad[ti][c] { 1.0 } else { 0.0 };
                l_vad += x.max(0.0) - x * y + (1.0 + (-x.abs()).exp()).ln();
            }
        }
        vad_frames = t;
        if t > 0 {
            l_vad /= (t * 2) as f64;
        }
    }

    let mut l_bc = 0.0f64;
    let mut all_bc_masked = false;
    let mut bc_frames = 0usize;
    if weights.gamma != 0.0 {
        let logits = outputs.bc_logits.as_ref().ok_or_else(|| {
            TrainError::InvalidConfig("backchannel loss needs a backchannel head".into())
        })?;
        let (w, wsum, frames) = bc_frame_weights::<F>(labels, weights.positive_weight);
        bc_frames = frames;
        if wsum == 0.0 {
            all_bc_masked = true;
        } else {
            for (ti, row) in logits.rows().into_iter().enumerate() {
                let wi = w[ti].to_f64().unwrap();
                if wi == 0.0 {
                    continue;
                }
                l_bc += wi * row_cross_entropy(row, labels.bc_class[ti] as usize);
            }
            l_bc /= wsum;
        }
    }

    Ok(LossBreakdown::assemble(
        weights,
        l_vap,
        l_vad,
        l_bc,
        (vap_frames, vad_frames, bc_frames),
        all_bc_masked,
    ))
}

fn row_cross_entropy<F: Scalar>(row: ndarray::ArrayView1<'_, F>, target: usize) -> f64 {
    let max = row.iter().cloned().fold(F::neg_infinity(), F::max).to_f64().unwrap();
    let sum: f64 = row.iter().map(|&v| (v.to_f64().unwrap() - max).exp()).sum();
    max + sum.ln() - row[target].to_f64().unwrap()
}

/// Loss nodes on a live tape. Returns the node to run backward from plus
/// the realized breakdown.
pub fn build_loss_graph<F: Scalar>(
    tape: &mut Tape<'_, F>,
    heads: &HeadNodes,
    labels: &FrameLabels,
    weights: &Weights,
) -> Result<(NodeId, LossBreakdown), TrainError> {
    let mut terms: Vec<(NodeId, F)> = Vec::new();
    let t = labels.len();

    let mut l_vap = 0.0f64;
    let mut vap_frames = 0usize;
    if weights.alpha != 0.0 {
        let logits = heads
            .vap
            .ok_or_else(|| TrainError::InvalidConfig("vap loss needs a projection head".into()))?;
        if tape.shape(logits).0 != t {
            return Err(TrainError::LengthMismatch("vap logits vs labels".into()));
        }
        let targets = Arc::new(labels.vap_state.iter().map(|&s| s as usize).collect::<Vec<_>>());
        let ones = Arc::new(vec![F::one(); t]);
        let node = tape.ce_rows(logits, targets, ones, F::from(t as f64).unwrap());
        l_vap = tape.value(node)[[0, 0]].to_f64().unwrap();
        vap_frames = t;
        terms.push((node, F::from(weights.alpha).unwrap()));
    }

    let mut l_vad = 0.0f64;
    let mut vad_frames = 0usize;
    if weights.beta != 0.0 {
        let logits = heads
            .vad
            .ok_or_else(|| TrainError::InvalidConfig("vad loss needs a vad head".into()))?;
        if tape.shape(logits).0 != t {
            return Err(TrainError::LengthMismatch("vad logits vs labels".into()));
        }
        let targets = Array2::from_shape_fn((t, 2), |(ti, c)| {
            if labels.vad[ti][c] {
                F::one()
            } else {
                F::zero()
            }
        });
        let node = tape.bce_logits(logits, Arc::new(targets), F::from((t * 2) as f64).unwrap());
        l_vad = tape.value(node)[[0, 0]].to_f64().unwrap();
        vad_frames = t;
        terms.push((node, F::from(weights.beta).unwrap()));
    }

    let mut l_bc = 0.0f64;
    let mut all_bc_masked = false;
    let mut bc_frames = 0usize;
    if weights.gamma != 0.0 {
        let logits = heads.bc.ok_or_else(|| {
            TrainError::InvalidConfig("backchannel loss needs a backchannel head".into())
        })?;
        if tape.shape(logits).0 != t {
            return Err(TrainError::LengthMismatch("bc logits vs labels".into()));
        }
        let (w, wsum, frames) = bc_frame_weights::<F>(labels, weights.positive_weight);
        bc_frames = frames;
        if wsum == 0.0 {
            all_bc_masked = true;
        } else {
            let targets =
                Arc::new(labels.bc_class.iter().map(|&c| c as usize).collect::<Vec<_>>());
            let node =
                tape.ce_rows(logits, targets, Arc::new(w), F::from(wsum).unwrap());
            l_bc = tape.value(node)[[0, 0]].to_f64().unwrap();
            terms.push((node, F::from(weights.gamma).unwrap()));
        }
    }

    let total = if terms.is_empty() {
        return Err(TrainError::InvalidConfig("all loss weights are zero".into()));
    } else {
        tape.weighted_sum(&terms)
    };
    let breakdown = LossBreakdown::assemble(
        weights,
        l_vap,
        l_vad,
        l_bc,
        (vap_frames, vad_frames, bc_frames),
        all_bc_masked,
    );
    Ok((total, breakdown))
}
