//! Model configuration and validation.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// How per-channel features enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Trainable log-mel + causal conv stack owned by the model.
    Reference,
    /// Precomputed T x d_channel feature files; no encoder parameters exist
    /// and nothing upstream of the Transformers is trained.
    ExternalFeatures,
}

/// Network topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    /// Encoder, channel-wise Transformer, cross-attention Transformer, heads.
    Vap,
    /// Comparison topology: per-channel encoder outputs concatenated into a
    /// single linear backchannel head, no Transformer stack.
    EncoderLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub arch: ArchKind,
    /// Log-mel bands consumed by the reference encoder.
    pub n_bands: usize,
    /// Per-channel model width.
    pub d_channel: usize,
    /// Concatenated width; must equal 2 * d_channel.
    pub d_concat: usize,
    pub n_channel_layers: usize,
    pub n_cross_layers: usize,
    pub n_heads: usize,
    /// Feed-forward width multiplier.
    pub ffn_mult: usize,
    /// Model frame rate in Hz.
    pub frame_rate: u32,
    /// Backchannel head classes: 0 (no head yet), 2 (timing) or 3 (type).
    pub bc_classes: usize,
    /// Positional table length; upper bound on any Transformer input length.
    pub max_context: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Reference,
            arch: ArchKind::Vap,
            n_bands: 40,
            d_channel: 256,
            d_concat: 512,
            n_channel_layers: 1,
            n_cross_layers: 3,
            n_heads: 4,
            ffn_mult: 4,
            frame_rate: 10,
            bc_classes: 0,
            max_context: 1024,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.d_concat != 2 * self.d_channel {
            return fail(format!(
                "d_concat must be 2 * d_channel ({} != 2 * {})",
                self.d_concat, self.d_channel
            ));
        }
        if self.d_channel == 0 || self.n_heads == 0 || self.d_channel % self.n_heads != 0 {
            return fail(format!(
                "n_heads ({}) must divide d_channel ({})",
                self.n_heads, self.d_channel
            ));
        }
        if !matches!(self.frame_rate, 10 | 50) {
            return fail(format!("frame_rate must be 10 or 50 Hz, got {}", self.frame_rate));
        }
        if !matches!(self.bc_classes, 0 | 2 | 3) {
            return fail(format!("bc_classes must be 0, 2 or 3, got {}", self.bc_classes));
        }
        if self.encoder == EncoderKind::Reference && self.n_bands < 8 {
            return fail(format!("n_bands must be >= 8, got {}", self.n_bands));
        }
        if self.max_context == 0 {
            return fail("max_context must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0,1), got {}", self.dropout));
        }
        match self.arch {
            ArchKind::Vap => {
                if self.n_channel_layers == 0 || self.n_cross_layers == 0 {
                    return fail("vap arch needs at least one layer per stack".into());
                }
                if self.ffn_mult == 0 {
                    return fail("ffn_mult must be > 0".into());
                }
            }
            ArchKind::EncoderLinear => {
                if self.bc_classes == 0 {
                    return fail("encoder-linear arch requires a backchannel head".into());
                }
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_channel / self.n_heads
    }

    /// Width of the per-channel features entering the Transformer stack.
    pub fn encoder_input_dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Reference => self.n_bands,
            EncoderKind::ExternalFeatures => self.d_channel,
        }
    }
}
