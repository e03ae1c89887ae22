//! The prediction network: pluggable per-channel encoder, channel-wise
//! Transformer, cross-attention Transformer, and linear heads for future
//! voice activity (256 states), current voice activity, and backchannel
//! class.

mod checkpoint;
pub mod config;
pub mod features;
mod graph;
mod layout;

pub use checkpoint::{load_checkpoint, load_for_task, store_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ArchKind, EncoderKind, ModelConfig};
pub use features::{read_feature_file, write_feature_file};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::{AudioError, FeatureSequence, MelExtractor};
use crate::nn::{NodeId, ParamStore, Scalar, Tape};

use graph::GraphCtx;
use layout::Layout;

/// Input conditioning for log-mel features: maps the silence floor
/// (ln 1e-10 = -23) and speech-level energies into a unit-scale range
/// before the conv stack.
const MEL_SHIFT: f64 = 16.0;
const MEL_SCALE: f64 = 0.125;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("context exceeded: {0}")]
    ContextExceeded(String),
    #[error("empty audio")]
    EmptyAudio,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u32),
    #[error("missing tensor: {0}")]
    MissingTensor(String),
    #[error("unexpected tensor: {0}")]
    UnexpectedTensor(String),
    #[error("tensor shape mismatch: {0}")]
    TensorShape(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("audio error: {0}")]
    Audio(#[from] AudioError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-frame logits and their normalized counterparts. Heads that do not
/// exist for the checkpoint's architecture are `None`.
#[derive(Debug, Clone)]
pub struct ModelOutput<F: Scalar> {
    pub frame_rate: u32,
    pub vap_logits: Option<Array2<F>>,
    pub vad_logits: Option<Array2<F>>,
    pub bc_logits: Option<Array2<F>>,
    pub vap_probs: Option<Array2<F>>,
    pub vad_probs: Option<Array2<F>>,
    pub bc_probs: Option<Array2<F>>,
}

impl<F: Scalar> ModelOutput<F> {
    pub fn len(&self) -> usize {
        self.vap_logits
            .as_ref()
            .or(self.bc_logits.as_ref())
            .map(|a| a.nrows())
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// State distribution at frame `t` (requires the projection head).
    pub fn vap_distribution(&self, t: usize) -> crate::state_codec::StateDistribution {
        let row = self.vap_probs.as_ref().expect("no vap head").row(t);
        let mut probs = [0.0f64; 256];
        let mut sum = 0.0;
        for (i, &p) in row.iter().enumerate() {
            probs[i] = p.to_f64().unwrap().max(0.0);
            sum += probs[i];
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        crate::state_codec::StateDistribution::new(probs).expect("normalized")
    }
}

/// Logit rows for a single emitted frame.
#[derive(Debug, Clone)]
pub struct FrameLogits<F: Scalar> {
    pub vap: Option<Array1<F>>,
    pub vad: Option<Array1<F>>,
    pub bc: Option<Array1<F>>,
}

/// Node ids of the head outputs inside a training graph.
pub struct HeadNodes {
    pub vap: Option<NodeId>,
    pub vad: Option<NodeId>,
    pub bc: Option<NodeId>,
}

pub struct VapModel<F: Scalar> {
    config: ModelConfig,
    params: ParamStore<F>,
    layout: Layout,
}

impl<F: Scalar> VapModel<F> {
    /// Deterministically initialize a fresh model from `config` with `seed`.
    pub fn init(mut config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.seed = seed;
        config.validate()?;
        let (params, layout) = layout::build(&config, Some(seed));
        Ok(Self { config, params, layout })
    }

    /// Model shell with zeroed parameters (checkpoint loading fills them).
    fn zeroed(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (params, layout) = layout::build(&config, None);
        Ok(Self { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.total_elements()
    }

    /// Copy of this model with a (re)initialized backchannel head of
    /// `bc_classes` outputs; all other parameters are carried over.
    pub fn with_bc_head(&self, bc_classes: usize, head_seed: u64) -> Result<Self, ModelError> {
        let mut config = self.config.clone();
        config.bc_classes = bc_classes;
        let mut fresh = Self::init(config, head_seed)?;
        for (name, value) in self.params.iter() {
            if let Some(pid) = fresh.params.lookup(name) {
                if fresh.params.value(pid).dim() == value.dim() {
                    *fresh.params.value_mut(pid) = value.clone();
                }
            }
        }
        fresh.config.seed = self.config.seed;
        Ok(fresh)
    }

    /// Input conditioning applied before the encoder.
    fn condition_input(&self, feats: &Array2<F>) -> Array2<F> {
        match self.config.encoder {
            EncoderKind::Reference => {
                let shift = F::from(MEL_SHIFT).unwrap();
                let scale = F::from(MEL_SCALE).unwrap();
                feats.mapv(|v| (v + shift) * scale)
            }
            EncoderKind::ExternalFeatures => feats.clone(),
        }
    }

    fn check_inputs(&self, f0: &Array2<F>, f1: &Array2<F>) -> Result<usize, ModelError> {
        if f0.nrows() != f1.nrows() {
            return Err(ModelError::LengthMismatch(format!(
                "channel frame counts differ: {} vs {}",
                f0.nrows(),
                f1.nrows()
            )));
        }
        let want = self.config.encoder_input_dim();
        for (c, f) in [f0, f1].iter().enumerate() {
            if f.ncols() != want {
                return Err(ModelError::LengthMismatch(format!(
                    "channel {c} feature dim {} != expected {want}",
                    f.ncols()
                )));
            }
        }
        Ok(f0.nrows())
    }

    fn ctx<'a, 'p>(
        &self,
        tape: &'a mut Tape<'p, F>,
        t_len: usize,
        rng: Option<&'a mut ChaCha8Rng>,
    ) -> GraphCtx<'a, 'p, F> {
        GraphCtx::new(
            tape,
            self.params.len(),
            t_len,
            self.config.n_heads,
            self.config.head_dim(),
            self.config.dropout,
            rng,
        )
    }

    /// Encoder + Transformer + heads over full history, with optional
    /// dropout for training. Returns the tape for loss construction.
    pub fn forward_graph<'m>(
        &'m self,
        f0: &Array2<F>,
        f1: &Array2<F>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tape<'m, F>, HeadNodes), ModelError> {
        let t_len = self.check_inputs(f0, f1)?;
        if t_len > self.config.max_context {
            return Err(ModelError::ContextExceeded(format!(
                "{t_len} frames > max_context {}",
                self.config.max_context
            )));
        }
        let mut tape = Tape::new(&self.params);
        let heads = {
            let mut ctx = self.ctx(&mut tape, t_len, rng);
            let c0 = self.condition_input(f0);
            let c1 = self.condition_input(f1);
            let in0 = ctx.tape.constant(c0);
            let in1 = ctx.tape.constant(c1);
            let e0 = self.encode_node(&mut ctx, in0);
            let e1 = self.encode_node(&mut ctx, in1);
            let concat = self.trunk(&mut ctx, e0, e1, t_len);
            self.heads(&mut ctx, concat, false)
        };
        Ok((tape, heads))
    }

    fn encode_node(&self, ctx: &mut GraphCtx<'_, '_, F>, input: NodeId) -> NodeId {
        match &self.layout.encoder {
            Some(ids) => ctx.encoder_stack(input, ids),
            None => input,
        }
    }

    /// Transformer trunk (or plain concatenation for the encoder-linear
    /// architecture); returns the T x d_concat sequence node.
    fn trunk(&self, ctx: &mut GraphCtx<'_, '_, F>, e0: NodeId, e1: NodeId, t_len: usize) -> NodeId {
        if self.config.arch == ArchKind::EncoderLinear {
            return ctx.tape.concat_cols(e0, e1);
        }
        let pos = self.layout.pos.expect("vap arch has positions");
        let pos_leaf = ctx.leaf(pos);
        let pos_rows = ctx.tape.slice_rows(pos_leaf, 0, t_len);
        let mut x0 = ctx.tape.add(e0, pos_rows);
        let mut x1 = ctx.tape.add(e1, pos_rows);
        for block in &self.layout.channel_blocks {
            x0 = ctx.self_block(x0, block);
            x1 = ctx.self_block(x1, block);
        }
        for l in 0..self.config.n_cross_layers {
            let n0 = ctx.cross_block(x0, x1, &self.layout.cross_blocks[0][l]);
            let n1 = ctx.cross_block(x1, x0, &self.layout.cross_blocks[1][l]);
            x0 = n0;
            x1 = n1;
        }
        let final_ln = self.layout.final_ln.as_ref().expect("vap arch has final norms");
        let f0 = ctx.layer_norm(x0, &final_ln[0]);
        let f1 = ctx.layer_norm(x1, &final_ln[1]);
        ctx.tape.concat_cols(f0, f1)
    }

    fn heads(&self, ctx: &mut GraphCtx<'_, '_, F>, concat: NodeId, last_only: bool) -> HeadNodes {
        let src = if last_only {
            let t = ctx.tape.shape(concat).0;
            ctx.tape.slice_rows(concat, t - 1, 1)
        } else {
            concat
        };
        HeadNodes {
            vap: self.layout.vap_head.as_ref().map(|ids| ctx.linear(src, ids)),
            vad: self.layout.vad_head.as_ref().map(|ids| ctx.linear(src, ids)),
            bc: self.layout.bc_head.as_ref().map(|ids| ctx.linear(src, ids)),
        }
    }

    /// Encoder outputs over full history (no Transformer). Input is raw
    /// (unconditioned) per-channel features.
    pub fn encode_sequence(&self, feats: &Array2<F>) -> Result<Array2<F>, ModelError> {
        if feats.ncols() != self.config.encoder_input_dim() {
            return Err(ModelError::LengthMismatch(format!(
                "feature dim {} != expected {}",
                feats.ncols(),
                self.config.encoder_input_dim()
            )));
        }
        if feats.nrows() == 0 {
            return Ok(Array2::zeros((0, self.config.d_channel)));
        }
        let mut tape = Tape::new(&self.params);
        let out = {
            let mut ctx = self.ctx(&mut tape, feats.nrows(), None);
            let conditioned = self.condition_input(feats);
            let input = ctx.tape.constant(conditioned);
            self.encode_node(&mut ctx, input)
        };
        Ok(tape.value(out).clone())
    }

    /// Transformer + heads over precomputed encoder rows, emitting the last
    /// frame's logits. This is the incremental-step primitive shared by the
    /// streaming session and the windowed offline forward.
    pub fn step_logits(
        &self,
        enc0: ArrayView2<'_, F>,
        enc1: ArrayView2<'_, F>,
    ) -> Result<FrameLogits<F>, ModelError> {
        let t_len = enc0.nrows();
        if t_len == 0 || t_len != enc1.nrows() {
            return Err(ModelError::LengthMismatch(format!(
                "step windows: {} vs {}",
                t_len,
                enc1.nrows()
            )));
        }
        if t_len > self.config.max_context {
            return Err(ModelError::ContextExceeded(format!(
                "{t_len} frames > max_context {}",
                self.config.max_context
            )));
        }
        let mut tape = Tape::new(&self.params);
        let heads = {
            let mut ctx = self.ctx(&mut tape, t_len, None);
            let e0 = ctx.tape.constant(enc0.to_owned());
            let e1 = ctx.tape.constant(enc1.to_owned());
            let concat = self.trunk(&mut ctx, e0, e1, t_len);
            self.heads(&mut ctx, concat, true)
        };
        let row = |id: Option<NodeId>| id.map(|n| tape.value(n).row(0).to_owned());
        Ok(FrameLogits { vap: row(heads.vap), vad: row(heads.vad), bc: row(heads.bc) })
    }

    /// Offline forward pass.
    ///
    /// With `window = None` (or a window covering the whole input) this is a
    /// single full-history causal pass. With a finite window the Transformer
    /// sees, for every frame, only the trailing `window` encoder frames
    /// (recomputed per frame, exactly like the streaming runtime); the
    /// encoder itself always sees full history.
    pub fn forward(
        &self,
        f0: &Array2<F>,
        f1: &Array2<F>,
        window: Option<usize>,
    ) -> Result<ModelOutput<F>, ModelError> {
        let t_len = self.check_inputs(f0, f1)?;
        if t_len == 0 {
            return Ok(self.empty_output());
        }
        match window {
            Some(0) => Err(ModelError::InvalidConfig("window must be > 0".into())),
            None => self.forward_full(f0, f1),
            Some(w) if w >= t_len => self.forward_full(f0, f1),
            Some(w) => self.forward_windowed(f0, f1, t_len, w),
        }
    }

    fn forward_full(&self, f0: &Array2<F>, f1: &Array2<F>) -> Result<ModelOutput<F>, ModelError> {
        let (tape, heads) = self.forward_graph(f0, f1, None)?;
        let take = |id: Option<NodeId>| id.map(|n| tape.value(n).clone());
        Ok(self.finish_output(take(heads.vap), take(heads.vad), take(heads.bc)))
    }

    fn forward_windowed(
        &self,
        f0: &Array2<F>,
        f1: &Array2<F>,
        t_len: usize,
        window: usize,
    ) -> Result<ModelOutput<F>, ModelError> {
        if window > self.config.max_context {
            return Err(ModelError::ContextExceeded(format!(
                "window {window} > max_context {}",
                self.config.max_context
            )));
        }
        let enc0 = self.encode_sequence(f0)?;
        let enc1 = self.encode_sequence(f1)?;
        let mut vap_rows = Vec::new();
        let mut vad_rows = Vec::new();
        let mut bc_rows = Vec::new();
        for t in 0..t_len {
            let start = (t + 1).saturating_sub(window);
            let logits = self.step_logits(
                enc0.slice(ndarray::s![start..t + 1, ..]),
                enc1.slice(ndarray::s![start..t + 1, ..]),
            )?;
            if let Some(v) = logits.vap {
                vap_rows.push(v);
            }
            if let Some(v) = logits.vad {
                vad_rows.push(v);
            }
            if let Some(v) = logits.bc {
                bc_rows.push(v);
            }
        }
        let stack = |rows: Vec<Array1<F>>| -> Option<Array2<F>> {
            if rows.is_empty() {
                return None;
            }
            let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
            Some(ndarray::concatenate(Axis(0), &views).expect("uniform rows"))
        };
        Ok(self.finish_output(stack(vap_rows), stack(vad_rows), stack(bc_rows)))
    }

    fn empty_output(&self) -> ModelOutput<F> {
        let opt = |cols: usize, present: bool| present.then(|| Array2::zeros((0, cols)));
        let vap = opt(256, self.layout.vap_head.is_some());
        let vad = opt(2, self.layout.vad_head.is_some());
        let bc = opt(self.config.bc_classes.max(1), self.layout.bc_head.is_some());
        self.finish_output(vap, vad, bc)
    }

    fn finish_output(
        &self,
        vap_logits: Option<Array2<F>>,
        vad_logits: Option<Array2<F>>,
        bc_logits: Option<Array2<F>>,
    ) -> ModelOutput<F> {
        ModelOutput {
            frame_rate: self.config.frame_rate,
            vap_probs: vap_logits.as_ref().map(softmax_rows_values),
            vad_probs: vad_logits.as_ref().map(sigmoid_values),
            bc_probs: bc_logits.as_ref().map(softmax_rows_values),
            vap_logits,
            vad_logits,
            bc_logits,
        }
    }
}

impl VapModel<f32> {
    /// Full reference-encoder chain from raw audio: log-mel, conditioning,
    /// conv stack, projection. One output frame per model frame.
    pub fn encode_reference(
        &self,
        samples: &[f32],
        channel_id: usize,
    ) -> Result<FeatureSequence, ModelError> {
        if self.config.encoder != EncoderKind::Reference {
            return Err(ModelError::InvalidConfig(
                "encode_reference requires the reference encoder".into(),
            ));
        }
        let mel = self.mel_features(samples)?;
        let enc = self.encode_sequence(&mel)?;
        Ok(FeatureSequence { frames: enc, frame_rate: self.config.frame_rate, channel_id })
    }

    /// Raw (unconditioned) log-mel features at the model's frame rate.
    pub fn mel_features(&self, samples: &[f32]) -> Result<Array2<f32>, ModelError> {
        let ex = MelExtractor::new(
            crate::audio::SAMPLE_RATE,
            self.config.frame_rate,
            self.config.n_bands,
        )?;
        Ok(ex.extract(samples, 0)?.frames)
    }
}

/// Row-wise stable softmax on plain values.
pub fn softmax_rows_values<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn sigmoid_values<F: Scalar>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| F::one() / (F::one() + (-v).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_channel: 16,
            d_concat: 32,
            n_bands: 8,
            n_heads: 4,
            max_context: 64,
            bc_classes: 2,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    fn rand_feats(seed: u64, t: usize, d: usize) -> Array2<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, d), |_| rng.random::<f32>() * 2.0 - 1.0)
    }

    #[test]
    fn init_is_deterministic() {
        let a = VapModel::<f32>::init(tiny_config(), 7).unwrap();
        let b = VapModel::<f32>::init(tiny_config(), 7).unwrap();
        for ((na, va), (nb, vb)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(va, vb);
        }
        let c = VapModel::<f32>::init(tiny_config(), 8).unwrap();
        assert_ne!(a.params.value(0), c.params.value(0));
    }

    #[test]
    fn head_width_and_divisibility() {
        let cfg = tiny_config();
        assert_eq!(cfg.head_dim(), 4);
        let full = ModelConfig::default();
        assert_eq!(full.head_dim(), 64);
        let bad = ModelConfig { n_heads: 5, ..ModelConfig::default() };
        assert!(matches!(VapModel::<f32>::init(bad, 0), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn param_count_matches_closed_form() {
        let cfg = tiny_config();
        let model = VapModel::<f32>::init(cfg.clone(), 0).unwrap();
        let d = cfg.d_channel;
        let ffn = d * cfg.ffn_mult;
        let enc = cfg.n_bands * d * 3 + d + d * d * 2 + d + d * d + d;
        let pos = cfg.max_context * d;
        let attn = 4 * (d * d + d);
        let self_block = 2 * 2 * d + attn + (d * ffn + ffn) + (ffn * d + d);
        let cross_block = 4 * 2 * d + 2 * attn + (d * ffn + ffn) + (ffn * d + d);
        let trunk = cfg.n_channel_layers * self_block
            + 2 * cfg.n_cross_layers * cross_block
            + 2 * 2 * d;
        let heads = (cfg.d_concat * 256 + 256)
            + (cfg.d_concat * 2 + 2)
            + (cfg.d_concat * cfg.bc_classes + cfg.bc_classes);
        assert_eq!(model.param_count(), enc + pos + trunk + heads);
    }

    #[test]
    fn forward_shapes_and_row_sums() {
        let model = VapModel::<f32>::init(tiny_config(), 1).unwrap();
        let f0 = rand_feats(1, 12, 8);
        let f1 = rand_feats(2, 12, 8);
        let out = model.forward(&f0, &f1, None).unwrap();
        assert_eq!(out.len(), 12);
        let vap = out.vap_probs.as_ref().unwrap();
        assert_eq!(vap.dim(), (12, 256));
        for row in vap.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
        let bc = out.bc_probs.as_ref().unwrap();
        for row in bc.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        let vad = out.vad_probs.as_ref().unwrap();
        assert!(vad.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(out.vap_logits.as_ref().unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let model = VapModel::<f32>::init(tiny_config(), 1).unwrap();
        let f = Array2::<f32>::zeros((0, 8));
        let out = model.forward(&f, &f, None).unwrap();
        assert_eq!(out.len(), 0);
        assert!(out.is_empty());
    }

    #[test]
    fn length_mismatch_rejected() {
        let model = VapModel::<f32>::init(tiny_config(), 1).unwrap();
        let f0 = rand_feats(1, 10, 8);
        let f1 = rand_feats(2, 9, 8);
        assert!(matches!(model.forward(&f0, &f1, None), Err(ModelError::LengthMismatch(_))));
    }

    #[test]
    fn causality_is_exact() {
        let model = VapModel::<f32>::init(tiny_config(), 3).unwrap();
        let f0 = rand_feats(10, 16, 8);
        let f1 = rand_feats(11, 16, 8);
        let base = model.forward(&f0, &f1, None).unwrap();
        let t = 7usize;
        let mut f0p = f0.clone();
        let mut f1p = f1.clone();
        for u in t + 1..16 {
            for c in 0..8 {
                f0p[[u, c]] += 3.0;
                f1p[[u, c]] -= 2.0;
            }
        }
        let pert = model.forward(&f0p, &f1p, None).unwrap();
        for u in 0..=t {
            assert_eq!(
                base.vap_logits.as_ref().unwrap().row(u),
                pert.vap_logits.as_ref().unwrap().row(u),
                "frame {u}"
            );
            assert_eq!(
                base.bc_logits.as_ref().unwrap().row(u),
                pert.bc_logits.as_ref().unwrap().row(u)
            );
        }
        assert_ne!(
            base.vap_logits.as_ref().unwrap().row(t + 1),
            pert.vap_logits.as_ref().unwrap().row(t + 1)
        );
    }

    #[test]
    fn window_larger_than_input_is_inert() {
        let model = VapModel::<f32>::init(tiny_config(), 4).unwrap();
        let f0 = rand_feats(20, 10, 8);
        let f1 = rand_feats(21, 10, 8);
        let full = model.forward(&f0, &f1, None).unwrap();
        let windowed = model.forward(&f0, &f1, Some(10)).unwrap();
        assert_eq!(full.vap_logits, windowed.vap_logits);
        assert_eq!(full.bc_logits, windowed.bc_logits);
    }

    #[test]
    fn windowed_output_is_invariant_to_frames_left_of_window() {
        // With external features the model input IS the transformer input,
        // so the windowed forward must ignore frames <= t - window exactly.
        let cfg = ModelConfig { encoder: EncoderKind::ExternalFeatures, ..tiny_config() };
        let model = VapModel::<f32>::init(cfg, 5).unwrap();
        let f0 = rand_feats(30, 24, 16);
        let f1 = rand_feats(31, 24, 16);
        let window = 6usize;
        let base = model.forward(&f0, &f1, Some(window)).unwrap();
        let t = 20usize;
        let mut f0p = f0.clone();
        for u in 0..=t - window {
            for c in 0..16 {
                f0p[[u, c]] = 9.0;
            }
        }
        let pert = model.forward(&f0p, &f1, Some(window)).unwrap();
        assert_eq!(
            base.bc_logits.as_ref().unwrap().row(t),
            pert.bc_logits.as_ref().unwrap().row(t)
        );
        // Frames whose window includes a perturbed frame must change.
        assert_ne!(
            base.bc_logits.as_ref().unwrap().row(t - window),
            pert.bc_logits.as_ref().unwrap().row(t - window)
        );
    }

    #[test]
    fn reference_encoder_settles_on_silence() {
        let model = VapModel::<f32>::init(tiny_config(), 6).unwrap();
        // Constant (silence-like) mel input: conv receptive field is 4, so
        // rows settle from frame 3 on.
        let mel = Array2::<f32>::from_elem((12, 8), (1e-10f32).ln());
        let enc = model.encode_sequence(&mel).unwrap();
        for t in 4..12 {
            assert_eq!(enc.row(t), enc.row(3), "row {t} differs from settled row");
        }
        assert_ne!(enc.row(0), enc.row(3));
    }

    #[test]
    fn reference_encoder_shapes_from_audio() {
        let cfg = ModelConfig { frame_rate: 10, ..tiny_config() };
        let model = VapModel::<f32>::init(cfg, 6).unwrap();
        let samples = vec![0.05f32; 16000];
        let feats = model.encode_reference(&samples, 0).unwrap();
        assert_eq!(feats.len(), 10);
        assert_eq!(feats.dim(), 16);
    }

    #[test]
    fn encoder_linear_arch_has_only_bc_head() {
        let cfg = ModelConfig { arch: ArchKind::EncoderLinear, ..tiny_config() };
        let model = VapModel::<f32>::init(cfg, 2).unwrap();
        let f0 = rand_feats(1, 10, 8);
        let f1 = rand_feats(2, 10, 8);
        let out = model.forward(&f0, &f1, None).unwrap();
        assert!(out.vap_logits.is_none());
        assert!(out.vad_logits.is_none());
        assert_eq!(out.bc_logits.as_ref().unwrap().dim(), (10, 2));
    }

    #[test]
    fn with_bc_head_preserves_trunk() {
        let cfg = ModelConfig { bc_classes: 0, ..tiny_config() };
        let pre = VapModel::<f32>::init(cfg, 9).unwrap();
        let fine = pre.with_bc_head(3, 77).unwrap();
        assert_eq!(fine.config().bc_classes, 3);
        for (name, value) in pre.params.iter() {
            let pid = fine.params.lookup(name).unwrap();
            assert_eq!(fine.params.value(pid), value, "{name}");
        }
        assert!(fine.params.lookup("head.bc.w").is_some());
        let f0 = rand_feats(1, 8, 8);
        let f1 = rand_feats(2, 8, 8);
        let out = fine.forward(&f0, &f1, None).unwrap();
        assert_eq!(out.bc_probs.as_ref().unwrap().ncols(), 3);
    }
}
