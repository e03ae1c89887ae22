//! Two-stage optimization: pre-training on general dialogue (projection +
//! voice-activity losses), then fine-tuning with the added backchannel head
//! and the weighted three-term loss. Implements the trainable comparison
//! methods as configuration, not separate code paths.

mod loss;

pub use loss::{bc_frame_weights, build_loss_graph, compute_loss, LossBreakdown};

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{
    decide_classes, default_threshold_grid, frame_metrics, sweep_threshold, DecisionRule,
    EvalError,
};
use crate::labeling::{
    assemble_dataset, no_mutation, Dataset, FeatureSource, FrameLabels, LabelConfig, LabelError,
    SessionData, Task,
};
use crate::model::{load_checkpoint, ArchKind, ModelConfig, ModelError, VapModel};
use crate::nn::Adam;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("checkpoint missing: {0}")]
    CheckpointMissing(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

/// Trainable comparison methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Encoder + linear head only; the encoder itself is trained.
    Baseline,
    /// Single-task (backchannel loss only), fresh initialization.
    StNoPt,
    /// Single-task on top of a pre-trained checkpoint.
    StPt,
    /// Multi-task on top of a pre-trained checkpoint.
    MtPt,
}

impl Method {
    pub fn needs_pretrained(&self) -> bool {
        matches!(self, Method::StPt | Method::MtPt)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(Method::Baseline),
            "st_no_pt" => Some(Method::StNoPt),
            "st_pt" => Some(Method::StPt),
            "mt_pt" => Some(Method::MtPt),
            _ => None,
        }
    }
}

/// Effective loss weights after resolving stage and method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub positive_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub positive_weight: f64,
    pub stage: Stage,
    pub method: Method,
    pub task: Task,
    pub lr: f64,
    /// Window length in frames sampled from sessions.
    pub batch_len: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub val_interval: usize,
    /// Validations without improvement before stopping.
    pub patience: usize,
    /// Cap on validation windows (kept cheap; final numbers come from the
    /// evaluation module).
    pub val_windows: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub label: LabelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 5.0,
            positive_weight: 5.0,
            stage: Stage::Finetune,
            method: Method::MtPt,
            task: Task::Timing,
            lr: 1e-4,
            batch_len: 200,
            batch_size: 4,
            max_steps: 500,
            val_interval: 50,
            patience: 5,
            val_windows: 64,
            seed: 0,
            model: ModelConfig::default(),
            label: LabelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(TrainError::InvalidConfig("loss weights must be >= 0".into()));
        }
        if self.positive_weight < 1.0 {
            return Err(TrainError::InvalidConfig("positive_weight must be >= 1".into()));
        }
        if self.stage == Stage::Finetune && self.gamma == 0.0 {
            return Err(TrainError::InvalidConfig(
                "fine-tuning with gamma = 0 never updates the backchannel head".into(),
            ));
        }
        if self.batch_len == 0 || self.batch_size == 0 || self.max_steps == 0 {
            return Err(TrainError::InvalidConfig("batch/step sizes must be > 0".into()));
        }
        if self.batch_len > self.model.max_context {
            return Err(TrainError::InvalidConfig(format!(
                "batch_len {} exceeds max_context {}",
                self.batch_len, self.model.max_context
            )));
        }
        if self.label.frame_rate != self.model.frame_rate {
            return Err(TrainError::ConfigMismatch(format!(
                "label frame_rate {} != model frame_rate {}",
                self.label.frame_rate, self.model.frame_rate
            )));
        }
        Ok(())
    }

    /// Stage- and method-resolved loss weights: pre-training has no
    /// backchannel term; single-task and baseline fine-tuning zero the
    /// projection and voice-activity terms.
    pub fn weights(&self) -> Weights {
        let (alpha, beta, gamma) = match self.stage {
            Stage::Pretrain => (self.alpha, self.beta, 0.0),
            Stage::Finetune => match self.method {
                Method::MtPt => (self.alpha, self.beta, self.gamma),
                Method::Baseline | Method::StNoPt | Method::StPt => (0.0, 0.0, self.gamma),
            },
        };
        Weights { alpha, beta, gamma, positive_weight: self.positive_weight }
    }
}

/// One line per logged step.
#[derive(Debug, Clone, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub l_vap: f64,
    pub l_vad: f64,
    pub l_bc: f64,
    pub total: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    pub best_val: Option<f64>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn write_jsonl(&self, path: &Path) -> Result<(), TrainError> {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("serializable"));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

struct WindowRef {
    session: usize,
    start: usize,
    len: usize,
}

fn sample_window(rng: &mut ChaCha8Rng, dataset: &Dataset, batch_len: usize) -> WindowRef {
    let session = rng.random_range(0..dataset.items.len());
    let t = dataset.items[session].labels.len();
    if t <= batch_len {
        WindowRef { session, start: 0, len: t }
    } else {
        let start = rng.random_range(0..=t - batch_len);
        WindowRef { session, start, len: batch_len }
    }
}

fn slice_session(item: &SessionData, w: &WindowRef) -> (Array2<f32>, Array2<f32>, FrameLabels) {
    let range = w.start..w.start + w.len;
    let f0 = item.feats[0].slice(ndarray::s![range.clone(), ..]).to_owned();
    let f1 = item.feats[1].slice(ndarray::s![range.clone(), ..]).to_owned();
    let labels = FrameLabels {
        vad: item.labels.vad[range.clone()].to_vec(),
        vap_state: item.labels.vap_state[range.clone()].to_vec(),
        bc_class: item.labels.bc_class[range.clone()].to_vec(),
        bc_mask: item.labels.bc_mask[range].to_vec(),
    };
    (f0, f1, labels)
}

/// Deterministic non-overlapping validation windows (session-major order).
fn validation_windows(dataset: &Dataset, batch_len: usize, cap: usize) -> Vec<WindowRef> {
    let mut out = Vec::new();
    'outer: for (s, item) in dataset.items.iter().enumerate() {
        let t = item.labels.len();
        let mut start = 0;
        while start < t {
            let len = batch_len.min(t - start);
            if len > batch_len / 2 || t <= batch_len {
                out.push(WindowRef { session: s, start, len });
            }
            if out.len() >= cap {
                break 'outer;
            }
            start += batch_len;
        }
    }
    out
}

fn run_training(
    model: &mut VapModel<f32>,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    maximize_val: bool,
) -> Result<TrainLog, TrainError> {
    if train_set.items.is_empty() {
        return Err(TrainError::EmptyCorpus("train split has no sessions".into()));
    }
    let weights = cfg.weights();
    let mut opt = Adam::new(model.params(), cfg.lr);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, crate::nn::ParamStore<f32>)> = None;
    let mut stale = 0usize;

    for step in 0..cfg.max_steps {
        // Window choice and dropout masks derive from (seed, step, slot) so
        // the batch is reproducible regardless of worker scheduling.
        let refs: Vec<WindowRef> = (0..cfg.batch_size)
            .map(|slot| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    cfg.seed ^ ((step as u64) << 20) ^ (slot as u64).wrapping_mul(0x9E37_79B9),
                );
                sample_window(&mut rng, train_set, cfg.batch_len)
            })
            .collect();

        let per_window: Result<Vec<(Vec<Option<Array2<f32>>>, LossBreakdown)>, TrainError> = refs
            .par_iter()
            .enumerate()
            .map(|(slot, wref)| {
                let item = &train_set.items[wref.session];
                let (f0, f1, labels) = slice_session(item, wref);
                let mut dropout_rng = ChaCha8Rng::seed_from_u64(
                    cfg.seed ^ 0xD509_0CDE ^ ((step as u64) << 16) ^ slot as u64,
                );
                let (mut tape, heads) = model.forward_graph(&f0, &f1, Some(&mut dropout_rng))?;
                let (total, breakdown) = build_loss_graph(&mut tape, &heads, &labels, &weights)?;
                let grads = tape.backward(total, model.params().len());
                Ok((grads, breakdown))
            })
            .collect();
        let per_window = per_window?;

        // Deterministic reduction: sum in slot order, then scale.
        let mut grads: Vec<Option<Array2<f32>>> = vec![None; model.params().len()];
        let scale = 1.0f32 / cfg.batch_size as f32;
        let mut mean = LossBreakdown {
            l_vap: 0.0,
            l_vad: 0.0,
            l_bc: 0.0,
            total: 0.0,
            vap_frames: 0,
            vad_frames: 0,
            bc_frames: 0,
            all_bc_masked: false,
        };
        for (g, bd) in &per_window {
            for (pid, grad) in g.iter().enumerate() {
                if let Some(grad) = grad {
                    match &mut grads[pid] {
                        Some(acc) => *acc += grad,
                        None => grads[pid] = Some(grad.clone()),
                    }
                }
            }
            mean.l_vap += bd.l_vap;
            mean.l_vad += bd.l_vad;
            mean.l_bc += bd.l_bc;
            mean.total += bd.total;
            mean.vap_frames += bd.vap_frames;
            mean.vad_frames += bd.vad_frames;
            mean.bc_frames += bd.bc_frames;
            mean.all_bc_masked |= bd.all_bc_masked;
        }
        for g in grads.iter_mut().flatten() {
            g.mapv_inplace(|v| v * scale);
        }
        let n = per_window.len() as f64;
        mean.l_vap /= n;
        mean.l_vad /= n;
        mean.l_bc /= n;
        mean.total /= n;

        opt.step(model.params_mut(), &grads);

        let val_metric = if (step + 1) % cfg.val_interval == 0 || step + 1 == cfg.max_steps {
            let metric = validation_metric(model, val_set, cfg, &weights)?;
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    if maximize_val {
                        metric > *b
                    } else {
                        metric < *b
                    }
                }
            };
            if better {
                best = Some((metric, model.params().clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            Some(metric)
        } else {
            None
        };

        log.records.push(LogRecord {
            step: step + 1,
            l_vap: mean.l_vap,
            l_vad: mean.l_vad,
            l_bc: mean.l_bc,
            total: mean.total,
            val_metric,
        });

        if stale > cfg.patience {
            log.stopped_early = true;
            break;
        }
    }

    if let Some((metric, params)) = best {
        *model.params_mut() = params;
        log.best_val = Some(metric);
    }
    Ok(log)
}

/// Validation metric: mean projection loss for pre-training (lower is
/// better), backchannel F1 for fine-tuning (higher is better).
fn validation_metric(
    model: &VapModel<f32>,
    val_set: &Dataset,
    cfg: &TrainConfig,
    weights: &Weights,
) -> Result<f64, TrainError> {
    let windows = validation_windows(val_set, cfg.batch_len, cfg.val_windows);
    if windows.is_empty() {
        return Err(TrainError::EmptyCorpus("val split has no usable windows".into()));
    }
    match cfg.stage {
        Stage::Pretrain => {
            let losses: Result<Vec<f64>, TrainError> = windows
                .par_iter()
                .map(|wref| {
                    let item = &val_set.items[wref.session];
                    let (f0, f1, labels) = slice_session(item, wref);
                    let out = model.forward(&f0, &f1, None)?;
                    let bd = compute_loss(&out, &labels, weights)?;
                    Ok(bd.l_vap)
                })
                .collect();
            let losses = losses?;
            Ok(losses.iter().sum::<f64>() / losses.len() as f64)
        }
        Stage::Finetune => {
            let parts: Result<Vec<(Array2<f32>, FrameLabels)>, TrainError> = windows
                .par_iter()
                .map(|wref| {
                    let item = &val_set.items[wref.session];
                    let (f0, f1, labels) = slice_session(item, wref);
                    let out = model.forward(&f0, &f1, None)?;
                    let probs = out.bc_probs.ok_or_else(|| {
                        TrainError::InvalidConfig("no backchannel head during fine-tuning".into())
                    })?;
                    Ok((probs, labels))
                })
                .collect();
            let parts = parts?;
            let mut truth = Vec::new();
            let mut mask = Vec::new();
            for (_, labels) in &parts {
                truth.extend_from_slice(&labels.bc_class);
                mask.extend_from_slice(&labels.bc_mask);
            }
            match cfg.task {
                Task::Timing => {
                    let mut probs = Vec::new();
                    for (p, _) in &parts {
                        probs.extend(p.rows().into_iter().map(|r| r[1] as f64));
                    }
                    let truth_pos: Vec<bool> = truth.iter().map(|&c| c == 1).collect();
                    let (_, prf) =
                        sweep_threshold(&probs, &truth_pos, &mask, &default_threshold_grid())?;
                    Ok(prf.f1)
                }
                Task::Type => {
                    let mut pred = Vec::new();
                    for (p, _) in &parts {
                        pred.extend(decide_classes(p, &DecisionRule::Argmax)?);
                    }
                    let f1c = frame_metrics(&pred, &truth, &mask, 1)?.f1;
                    let f1a = frame_metrics(&pred, &truth, &mask, 2)?.f1;
                    Ok((f1c + f1a) / 2.0)
                }
            }
        }
    }
}

fn load_split(corpus: &Path, split: &str, cfg: &TrainConfig) -> Result<Dataset, TrainError> {
    let ds = assemble_dataset(
        corpus,
        split,
        cfg.task,
        &cfg.label,
        &match cfg.model.encoder {
            crate::model::EncoderKind::Reference => FeatureSource::Mel(&cfg.model),
            crate::model::EncoderKind::ExternalFeatures => FeatureSource::External,
        },
        &no_mutation,
    )?;
    if ds.items.is_empty() {
        return Err(TrainError::EmptyCorpus(format!("split '{split}' is empty")));
    }
    Ok(ds)
}

/// Stage 1: train the projection and voice-activity heads on a general
/// corpus. Returns the best-validation model.
pub fn pretrain(corpus: &Path, cfg: &TrainConfig) -> Result<(VapModel<f32>, TrainLog), TrainError> {
    let mut cfg = cfg.clone();
    cfg.stage = Stage::Pretrain;
    cfg.model.bc_classes = 0;
    cfg.model.arch = ArchKind::Vap;
    cfg.validate()?;
    let train_set = load_split(corpus, "train", &cfg)?;
    let val_set = load_split(corpus, "val", &cfg)?;
    pretrain_datasets(&train_set, &val_set, &cfg)
}

/// [`pretrain`] over already-assembled datasets (callers that train several
/// variants can reuse the feature extraction).
pub fn pretrain_datasets(
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(VapModel<f32>, TrainLog), TrainError> {
    let mut cfg = cfg.clone();
    cfg.stage = Stage::Pretrain;
    cfg.model.bc_classes = 0;
    cfg.model.arch = ArchKind::Vap;
    cfg.validate()?;
    let mut model = VapModel::init(cfg.model.clone(), cfg.seed)?;
    let log = run_training(&mut model, train_set, val_set, &cfg, false)?;
    Ok((model, log))
}

/// Initialization source for fine-tuning.
pub enum FinetuneInit<'a> {
    /// Load a pre-trained checkpoint (st_pt / mt_pt).
    FromCheckpoint(&'a Path),
    /// Fresh parameters (baseline / st_no_pt).
    Fresh,
}

/// Stage 2: train the backchannel head (plus, for the multi-task method, the
/// original projection and voice-activity objectives).
pub fn finetune(
    corpus: &Path,
    init: FinetuneInit<'_>,
    cfg: &TrainConfig,
) -> Result<(VapModel<f32>, TrainLog), TrainError> {
    let mut cfg = cfg.clone();
    cfg.stage = Stage::Finetune;
    cfg.model.bc_classes = cfg.task.bc_classes();
    cfg.model.arch =
        if cfg.method == Method::Baseline { ArchKind::EncoderLinear } else { ArchKind::Vap };
    cfg.validate()?;
    let train_set = load_split(corpus, "train", &cfg)?;
    let val_set = load_split(corpus, "val", &cfg)?;
    finetune_datasets(&train_set, &val_set, init, &cfg)
}

/// [`finetune`] over already-assembled datasets (callers training several
/// method variants can reuse the feature extraction).
pub fn finetune_datasets(
    train_set: &Dataset,
    val_set: &Dataset,
    init: FinetuneInit<'_>,
    cfg: &TrainConfig,
) -> Result<(VapModel<f32>, TrainLog), TrainError> {
    let mut cfg = cfg.clone();
    cfg.stage = Stage::Finetune;
    cfg.model.bc_classes = cfg.task.bc_classes();
    cfg.model.arch =
        if cfg.method == Method::Baseline { ArchKind::EncoderLinear } else { ArchKind::Vap };
    cfg.validate()?;

    let model_init = match (&init, cfg.method.needs_pretrained()) {
        (FinetuneInit::FromCheckpoint(path), _) => {
            if cfg.method == Method::Baseline {
                return Err(TrainError::ConfigMismatch(
                    "the baseline method trains from scratch".into(),
                ));
            }
            if !path.exists() {
                return Err(TrainError::CheckpointMissing(path.display().to_string()));
            }
            let pre = load_checkpoint(path)?;
            if pre.config().frame_rate != cfg.model.frame_rate {
                return Err(TrainError::ConfigMismatch(format!(
                    "checkpoint frame_rate {} != configured {}",
                    pre.config().frame_rate,
                    cfg.model.frame_rate
                )));
            }
            if pre.config().arch != ArchKind::Vap {
                return Err(TrainError::ConfigMismatch(
                    "checkpoint initialization requires the vap architecture".into(),
                ));
            }
            let model = pre.with_bc_head(cfg.task.bc_classes(), cfg.seed ^ 0xBC)?;
            cfg.model = model.config().clone();
            cfg.validate()?;
            model
        }
        (FinetuneInit::Fresh, true) => {
            return Err(TrainError::CheckpointMissing(format!(
                "method {:?} requires a pre-trained checkpoint",
                cfg.method
            )));
        }
        (FinetuneInit::Fresh, false) => VapModel::init(cfg.model.clone(), cfg.seed)?,
    };
    let mut model = model_init;
    let log = run_training(&mut model, train_set, val_set, &cfg, true)?;
    Ok((model, log))
}

/// Analytic-vs-numeric gradient comparison on a tiny f64 model.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
}

/// Compare every parameter's analytic gradient against central finite
/// differences of the full three-term loss, in 64-bit arithmetic.
/// Relative error uses a 0.01 magnitude floor so near-zero gradients are
/// judged by an absolute criterion at the finite-difference noise level.
pub fn gradient_check(t_len: usize, seed: u64) -> Result<GradCheckReport, TrainError> {
    let config = ModelConfig {
        d_channel: 16,
        d_concat: 32,
        n_bands: 8,
        n_heads: 4,
        max_context: t_len,
        bc_classes: 2,
        dropout: 0.0,
        frame_rate: 10,
        ..ModelConfig::default()
    };
    let mut model = VapModel::<f64>::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
    let f0 = Array2::from_shape_fn((t_len, 8), |_| rng.random::<f64>() * 2.0 - 1.0);
    let f1 = Array2::from_shape_fn((t_len, 8), |_| rng.random::<f64>() * 2.0 - 1.0);
    let labels = FrameLabels {
        vad: (0..t_len).map(|_| [rng.random::<bool>(), rng.random::<bool>()]).collect(),
        vap_state: (0..t_len).map(|_| rng.random_range(0..=255u8)).collect(),
        bc_class: (0..t_len).map(|_| rng.random_range(0..2u8)).collect(),
        bc_mask: (0..t_len).map(|i| i != 1).collect(),
    };
    let weights = Weights { alpha: 1.0, beta: 1.0, gamma: 5.0, positive_weight: 5.0 };

    let analytic = {
        let (mut tape, heads) = model.forward_graph(&f0, &f1, None)?;
        let (total, _) = build_loss_graph(&mut tape, &heads, &labels, &weights)?;
        tape.backward(total, model.params().len())
    };

    let eval_total = |model: &VapModel<f64>| -> Result<f64, TrainError> {
        let (mut tape, heads) = model.forward_graph(&f0, &f1, None)?;
        let (total, _) = build_loss_graph(&mut tape, &heads, &labels, &weights)?;
        Ok(tape.value(total)[[0, 0]])
    };

    let h = 1e-4;
    let mut checked = 0usize;
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    for pid in 0..model.params().len() {
        let dim = model.params().value(pid).dim();
        let name = model.params().name(pid).to_string();
        for i in 0..dim.0 {
            for j in 0..dim.1 {
                let orig = model.params().value(pid)[[i, j]];
                model.params_mut().value_mut(pid)[[i, j]] = orig + h;
                let up = eval_total(&model)?;
                model.params_mut().value_mut(pid)[[i, j]] = orig - h;
                let down = eval_total(&model)?;
                model.params_mut().value_mut(pid)[[i, j]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[pid].as_ref().map(|g| g[[i, j]]).unwrap_or(0.0);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(0.01);
                if rel > max_rel {
                    max_rel = rel;
                    worst = format!("{name}[{i},{j}] analytic={a:.3e} numeric={numeric:.3e}");
                }
                checked += 1;
            }
        }
    }
    Ok(GradCheckReport { checked, max_rel_err: max_rel, worst_param: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelOutput;
    use crate::synth::{generate_corpus, SplitCounts, SynthConfig};

    fn tiny_model_cfg() -> ModelConfig {
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

    fn labels_for(t: usize, seed: u64) -> FrameLabels {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FrameLabels {
            vad: (0..t).map(|_| [rng.random::<bool>(), rng.random::<bool>()]).collect(),
            vap_state: (0..t).map(|_| rng.random_range(0..=255u8)).collect(),
            bc_class: (0..t).map(|_| rng.random_range(0..2u8)).collect(),
            bc_mask: (0..t).map(|_| rng.random::<f64>() > 0.2).collect(),
        }
    }

    fn w_default() -> Weights {
        Weights { alpha: 1.0, beta: 1.0, gamma: 5.0, positive_weight: 5.0 }
    }

    #[test]
    fn loss_graph_matches_pure_reference() {
        let model = VapModel::<f32>::init(tiny_model_cfg(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f0 = Array2::from_shape_fn((20, 8), |_| rng.random::<f32>() - 0.5);
        let f1 = Array2::from_shape_fn((20, 8), |_| rng.random::<f32>() - 0.5);
        let labels = labels_for(20, 1);
        let weights = w_default();

        let (mut tape, heads) = model.forward_graph(&f0, &f1, None).unwrap();
        let (_, graph_bd) = build_loss_graph(&mut tape, &heads, &labels, &weights).unwrap();

        let out = model.forward(&f0, &f1, None).unwrap();
        let pure_bd = compute_loss(&out, &labels, &weights).unwrap();

        assert!((graph_bd.l_vap - pure_bd.l_vap).abs() < 1e-5, "vap");
        assert!((graph_bd.l_vad - pure_bd.l_vad).abs() < 1e-5, "vad");
        assert!((graph_bd.l_bc - pure_bd.l_bc).abs() < 1e-5, "bc");
    }

    #[test]
    fn decomposition_identity_is_exact() {
        let model = VapModel::<f32>::init(tiny_model_cfg(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for round in 0..5 {
            let f0 = Array2::from_shape_fn((12, 8), |_| rng.random::<f32>() - 0.5);
            let f1 = Array2::from_shape_fn((12, 8), |_| rng.random::<f32>() - 0.5);
            let labels = labels_for(12, round);
            let weights =
                Weights { alpha: 0.7, beta: 1.3, gamma: 4.2, positive_weight: 5.0 };
            let out = model.forward(&f0, &f1, None).unwrap();
            let bd = compute_loss(&out, &labels, &weights).unwrap();
            let recomputed =
                weights.alpha * bd.l_vap + weights.beta * bd.l_vad + weights.gamma * bd.l_bc;
            assert_eq!(bd.total, recomputed);
        }
    }

    #[test]
    fn contrived_unit_losses_sum_to_seven() {
        // Outputs engineered so each term is exactly ln(e) = 1: put
        // probability e^-1 on the target entry of every row.
        let t = 4usize;
        let p = (-1.0f64).exp();
        let vap_logits = Array2::from_shape_fn((t, 256), |(_, c)| {
            if c == 0 {
                p.ln() as f32
            } else {
                ((1.0 - p) / 255.0).ln() as f32
            }
        });
        // sigmoid(x) = e^-1 for inactive target: BCE = -ln(1 - e^-1)... use
        // the direct form: want -ln(sigmoid(x)) = 1 with target 1, so
        // sigmoid(x) = e^-1, x = ln(p/(1-p)).
        let x = (p / (1.0 - p)).ln() as f32;
        let vad_logits = Array2::from_elem((t, 2), x);
        let bc_logits = Array2::from_shape_fn((t, 2), |(_, c)| {
            if c == 1 {
                p.ln() as f32
            } else {
                (1.0 - p).ln() as f32
            }
        });
        let out = ModelOutput {
            frame_rate: 10,
            vap_probs: Some(crate::model::softmax_rows_values(&vap_logits)),
            vad_probs: Some(crate::model::sigmoid_values(&vad_logits)),
            bc_probs: Some(crate::model::softmax_rows_values(&bc_logits)),
            vap_logits: Some(vap_logits),
            vad_logits: Some(vad_logits),
            bc_logits: Some(bc_logits),
        };
        let labels = FrameLabels {
            vad: vec![[true, true]; t],
            vap_state: vec![0; t],
            bc_class: vec![1; t],
            bc_mask: vec![true; t],
        };
        let weights = w_default();
        let bd = compute_loss(&out, &labels, &weights).unwrap();
        assert!((bd.l_vap - 1.0).abs() < 1e-5, "l_vap {}", bd.l_vap);
        assert!((bd.l_vad - 1.0).abs() < 1e-5, "l_vad {}", bd.l_vad);
        assert!((bd.l_bc - 1.0).abs() < 1e-5, "l_bc {}", bd.l_bc);
        assert!((bd.total - 7.0).abs() < 3e-5, "total {}", bd.total);
    }

    #[test]
    fn one_hot_correct_gives_zero_loss() {
        let t = 3usize;
        let big = 50.0f32;
        let mut vap_logits = Array2::from_elem((t, 256), -big);
        for ti in 0..t {
            vap_logits[[ti, 7]] = big;
        }
        let vad_logits = Array2::from_elem((t, 2), big);
        let mut bc_logits = Array2::from_elem((t, 2), -big);
        for ti in 0..t {
            bc_logits[[ti, 0]] = big;
        }
        let out = ModelOutput {
            frame_rate: 10,
            vap_probs: Some(crate::model::softmax_rows_values(&vap_logits)),
            vad_probs: Some(crate::model::sigmoid_values(&vad_logits)),
            bc_probs: Some(crate::model::softmax_rows_values(&bc_logits)),
            vap_logits: Some(vap_logits),
            vad_logits: Some(vad_logits),
            bc_logits: Some(bc_logits),
        };
        let labels = FrameLabels {
            vad: vec![[true, true]; t],
            vap_state: vec![7; t],
            bc_class: vec![0; t],
            bc_mask: vec![true; t],
        };
        let bd = compute_loss(&out, &labels, &w_default()).unwrap();
        assert!(bd.total < 1e-6, "total {}", bd.total);
    }

    #[test]
    fn uniform_bc_logits_give_ln2_regardless_of_weights() {
        let t = 6usize;
        let bc_logits = Array2::from_elem((t, 2), 0.37f32);
        let out = ModelOutput {
            frame_rate: 10,
            vap_logits: None,
            vad_logits: None,
            bc_probs: Some(crate::model::softmax_rows_values(&bc_logits)),
            bc_logits: Some(bc_logits),
            vap_probs: None,
            vad_probs: None,
        };
        let labels = FrameLabels {
            vad: vec![[false, false]; t],
            vap_state: vec![0; t],
            bc_class: vec![0, 1, 1, 0, 1, 0].into_iter().collect(),
            bc_mask: vec![true; t],
        };
        for pw in [1.0, 5.0, 11.0] {
            let weights = Weights { alpha: 0.0, beta: 0.0, gamma: 1.0, positive_weight: pw };
            let bd = compute_loss(&out, &labels, &weights).unwrap();
            assert!((bd.l_bc - std::f64::consts::LN_2).abs() < 1e-6, "pw={pw}: {}", bd.l_bc);
        }
    }

    #[test]
    fn all_frames_masked_flags_and_zeroes() {
        let t = 4usize;
        let bc_logits = Array2::from_elem((t, 2), 0.5f32);
        let out = ModelOutput {
            frame_rate: 10,
            vap_logits: None,
            vad_logits: None,
            bc_probs: Some(crate::model::softmax_rows_values(&bc_logits)),
            bc_logits: Some(bc_logits),
            vap_probs: None,
            vad_probs: None,
        };
        let labels = FrameLabels {
            vad: vec![[false, false]; t],
            vap_state: vec![0; t],
            bc_class: vec![0; t],
            bc_mask: vec![false; t],
        };
        let weights = Weights { alpha: 0.0, beta: 0.0, gamma: 5.0, positive_weight: 5.0 };
        let bd = compute_loss(&out, &labels, &weights).unwrap();
        assert!(bd.all_bc_masked);
        assert_eq!(bd.l_bc, 0.0);
        assert_eq!(bd.total, 0.0);
    }

    /// The weighted per-frame term contributes positive_weight times the
    /// unweighted gradient at identical logits (checked on a single frame
    /// with the normalizer held at 1).
    #[test]
    fn positive_weight_scales_per_frame_gradient() {
        use std::sync::Arc;
        let mut store = crate::nn::ParamStore::<f64>::new();
        let pid = store.add("logits", Array2::from_shape_vec((1, 2), vec![0.3, -0.2]).unwrap());

        let grad_with_weight = |store: &crate::nn::ParamStore<f64>, w: f64| {
            let mut tape = crate::nn::Tape::new(store);
            let leaf = tape.param(pid);
            let node = tape.ce_rows(leaf, Arc::new(vec![1usize]), Arc::new(vec![w]), 1.0);
            tape.backward(node, store.len())[pid].clone().unwrap()
        };
        let g5 = grad_with_weight(&store, 5.0);
        let g1 = grad_with_weight(&store, 1.0);
        for c in 0..2 {
            assert!(
                (g5[[0, c]] - 5.0 * g1[[0, c]]).abs() < 1e-12,
                "{} vs {}",
                g5[[0, c]],
                g1[[0, c]]
            );
        }
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        // With every loss weight at zero the graph refuses to build; with
        // only gamma > 0 and all frames masked there is nothing to learn and
        // gradients are absent.
        let model = VapModel::<f32>::init(tiny_model_cfg(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f0 = Array2::from_shape_fn((8, 8), |_| rng.random::<f32>() - 0.5);
        let f1 = Array2::from_shape_fn((8, 8), |_| rng.random::<f32>() - 0.5);
        let labels = FrameLabels {
            vad: vec![[false, false]; 8],
            vap_state: vec![0; 8],
            bc_class: vec![0; 8],
            bc_mask: vec![false; 8],
        };
        let weights = Weights { alpha: 0.0, beta: 0.0, gamma: 0.0, positive_weight: 5.0 };
        let (mut tape, heads) = model.forward_graph(&f0, &f1, None).unwrap();
        assert!(build_loss_graph(&mut tape, &heads, &labels, &weights).is_err());
    }

    #[test]
    fn config_guards() {
        let mut cfg = TrainConfig {
            model: tiny_model_cfg(),
            batch_len: 32,
            max_steps: 2,
            ..TrainConfig::default()
        };
        cfg.stage = Stage::Finetune;
        cfg.gamma = 0.0;
        assert!(matches!(cfg.validate(), Err(TrainError::InvalidConfig(_))));
        cfg.gamma = 5.0;
        cfg.label.frame_rate = 50;
        assert!(matches!(cfg.validate(), Err(TrainError::ConfigMismatch(_))));
    }

    #[test]
    fn st_methods_zero_the_auxiliary_weights() {
        let cfg = TrainConfig {
            method: Method::StPt,
            stage: Stage::Finetune,
            ..TrainConfig::default()
        };
        let w = cfg.weights();
        assert_eq!((w.alpha, w.beta), (0.0, 0.0));
        assert_eq!(w.gamma, 5.0);
        let cfg = TrainConfig { stage: Stage::Pretrain, ..TrainConfig::default() };
        assert_eq!(cfg.weights().gamma, 0.0);
    }

    #[test]
    fn finetune_without_checkpoint_fails_for_pt_methods() {
        let dir = tempfile::tempdir().unwrap();
        let synth_cfg = SynthConfig {
            session_secs: 30.0,
            splits: SplitCounts { train: 1, val: 1, test: 1 },
            ..SynthConfig::default()
        };
        generate_corpus(&synth_cfg, dir.path()).unwrap();
        let cfg = TrainConfig {
            model: tiny_model_cfg(),
            method: Method::MtPt,
            batch_len: 50,
            max_steps: 2,
            val_interval: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            finetune(dir.path(), FinetuneInit::Fresh, &cfg),
            Err(TrainError::CheckpointMissing(_))
        ));
        let missing = dir.path().join("nope.vapb");
        assert!(matches!(
            finetune(dir.path(), FinetuneInit::FromCheckpoint(&missing), &cfg),
            Err(TrainError::CheckpointMissing(_))
        ));
    }

    #[test]
    fn one_batch_overfit_drops_projection_loss() {
        // Single short synthetic session, repeated batches from the same
        // window: l_vap after training must be well under its start.
        let dir = tempfile::tempdir().unwrap();
        let synth_cfg = SynthConfig {
            session_secs: 30.0,
            splits: SplitCounts { train: 1, val: 1, test: 0 },
            ..SynthConfig::default()
        };
        generate_corpus(&synth_cfg, dir.path()).unwrap();
        let cfg = TrainConfig {
            model: ModelConfig { max_context: 300, ..tiny_model_cfg() },
            stage: Stage::Pretrain,
            batch_len: 300,
            batch_size: 1,
            max_steps: 200,
            val_interval: 100,
            lr: 2e-3,
            seed: 11,
            ..TrainConfig::default()
        };
        let (_, log) = pretrain(dir.path(), &cfg).unwrap();
        let first = log.records.first().unwrap().l_vap;
        let last = log.records.last().unwrap().l_vap;
        assert!(
            last < 0.1 * first,
            "l_vap did not overfit: first {first}, last {last}"
        );
    }

    #[test]
    fn silence_corpus_converges_to_state_zero() {
        // All-silent corpus: the projection target is state 0 everywhere and
        // the cross-entropy must approach zero.
        let dir = tempfile::tempdir().unwrap();
        for (name, split) in [("s000", "train"), ("s001", "val")] {
            let sdir = dir.path().join(name);
            std::fs::create_dir_all(&sdir).unwrap();
            let audio = crate::audio::StereoAudio::silence(16000 * 30, 16000);
            crate::audio::write_wav_stereo(
                &sdir.join("audio.wav"),
                &audio,
                crate::audio::WavEncoding::Pcm16,
            )
            .unwrap();
            std::fs::write(sdir.join("bc.jsonl"), "").unwrap();
            std::fs::write(sdir.join("vad.jsonl"), "").unwrap();
            let _ = split;
        }
        std::fs::write(
            dir.path().join("manifest.json"),
            r#"{"sessions":{"s000":"train","s001":"val"}}"#,
        )
        .unwrap();
        let cfg = TrainConfig {
            model: ModelConfig { max_context: 300, ..tiny_model_cfg() },
            stage: Stage::Pretrain,
            batch_len: 300,
            batch_size: 1,
            max_steps: 250,
            val_interval: 125,
            lr: 1e-3,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, log) = pretrain(dir.path(), &cfg).unwrap();
        let last = log.records.last().unwrap().l_vap;
        assert!(last < 0.05, "l_vap on silence: {last}");
    }

    #[test]
    fn fixed_seed_reproduces_trajectory_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let synth_cfg = SynthConfig {
            session_secs: 30.0,
            splits: SplitCounts { train: 2, val: 1, test: 0 },
            ..SynthConfig::default()
        };
        generate_corpus(&synth_cfg, dir.path()).unwrap();
        let cfg = TrainConfig {
            model: ModelConfig { dropout: 0.1, ..tiny_model_cfg() },
            batch_len: 60,
            batch_size: 2,
            max_steps: 6,
            val_interval: 3,
            seed: 42,
            method: Method::StNoPt,
            ..TrainConfig::default()
        };
        let (m1, log1) = finetune(dir.path(), FinetuneInit::Fresh, &cfg).unwrap();
        let (m2, log2) = finetune(dir.path(), FinetuneInit::Fresh, &cfg).unwrap();
        for (a, b) in log1.records.iter().zip(&log2.records) {
            assert_eq!(a.total, b.total, "step {}", a.step);
        }
        for ((_, va), (_, vb)) in m1.params().iter().zip(m2.params().iter()) {
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn external_features_mode_has_no_encoder_params() {
        // Write a tiny external-features corpus and fine-tune on it; the
        // parameter table must not contain encoder entries.
        let dir = tempfile::tempdir().unwrap();
        let t = 80usize;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (i, split) in [("s000", "train"), ("s001", "val")] .iter().enumerate() {
            let sdir = dir.path().join(split.0);
            std::fs::create_dir_all(&sdir).unwrap();
            for c in 0..2 {
                let feats =
                    Array2::from_shape_fn((t, 16), |_| rng.random::<f32>() - 0.5);
                crate::model::write_feature_file(
                    &sdir.join(format!("feats.c{c}.vft")),
                    &feats,
                    10,
                )
                .unwrap();
            }
            std::fs::write(
                sdir.join("bc.jsonl"),
                format!(
                    "{{\"onset\":{},\"offset\":{},\"channel\":1,\"kind\":\"continuer\"}}\n",
                    2.0 + i as f64,
                    2.3 + i as f64
                ),
            )
            .unwrap();
            std::fs::write(sdir.join("vad.jsonl"), "").unwrap();
        }
        std::fs::write(
            dir.path().join("manifest.json"),
            r#"{"sessions":{"s000":"train","s001":"val"}}"#,
        )
        .unwrap();
        let cfg = TrainConfig {
            model: ModelConfig {
                encoder: crate::model::EncoderKind::ExternalFeatures,
                ..tiny_model_cfg()
            },
            method: Method::StNoPt,
            batch_len: 40,
            batch_size: 1,
            max_steps: 3,
            val_interval: 2,
            ..TrainConfig::default()
        };
        let (model, _) = finetune(dir.path(), FinetuneInit::Fresh, &cfg).unwrap();
        for (name, _) in model.params().iter() {
            assert!(!name.starts_with("enc."), "unexpected encoder parameter {name}");
        }
    }
}
