//! Frame-wise evaluation on unbalanced streams: per-class precision/recall/F1
//! over unmasked frames, threshold sweeps tuned on validation, reference
//! baselines, and the prosody-manipulation comparison harness.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::audio;
use crate::labeling::{
    assemble_dataset, Dataset, FeatureSource, FrameLabels, LabelConfig, LabelError, Task,
};
use crate::model::{ModelError, VapModel};
use crate::state_codec::zero_shot_bc_score;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: predictions {pred} vs labels {labels}")]
    LengthMismatch { pred: usize, labels: usize },
    #[error("binary decisions need a threshold; run a validation sweep first")]
    MissingThreshold,
    #[error("missing manipulated audio: {0}")]
    MissingManipulatedAudio(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Frame-wise one-vs-rest counts and the derived fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Prf {
    fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { f1, precision, recall, tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn positive_rate_counts(positives: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        positives as f64 / total as f64
    }
}

/// One-vs-rest metrics for `positive_class` over unmasked frames.
pub fn frame_metrics(
    pred: &[u8],
    truth: &[u8],
    mask: &[bool],
    positive_class: u8,
) -> Result<Prf, EvalError> {
    if pred.len() != truth.len() || truth.len() != mask.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), labels: truth.len() });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for ((&p, &y), &m) in pred.iter().zip(truth).zip(mask) {
        if !m {
            continue;
        }
        match (p == positive_class, y == positive_class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_, tn))
}

pub fn frame_metrics_labels(
    pred: &[u8],
    labels: &FrameLabels,
    positive_class: u8,
) -> Result<Prf, EvalError> {
    frame_metrics(pred, &labels.bc_class, &labels.bc_mask, positive_class)
}

/// Metrics of the classifier that answers `positive_class` on every frame.
pub fn always_positive_metrics(
    truth: &[u8],
    mask: &[bool],
    positive_class: u8,
) -> Result<Prf, EvalError> {
    let pred = vec![positive_class; truth.len()];
    frame_metrics(&pred, truth, mask, positive_class)
}

/// Default sweep grid: 101 thresholds, 0.00 to 1.00.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Maximize F1 over the grid; decisions are `prob >= threshold`. Ties take
/// the lowest threshold. When no threshold achieves a true positive (best F1
/// is 0), returns threshold 1.0 — the predict-nothing operating point.
pub fn sweep_threshold(
    probs: &[f64],
    truth_pos: &[bool],
    mask: &[bool],
    grid: &[f64],
) -> Result<(f64, Prf), EvalError> {
    if probs.len() != truth_pos.len() || truth_pos.len() != mask.len() {
        return Err(EvalError::LengthMismatch { pred: probs.len(), labels: truth_pos.len() });
    }
    let mut best: Option<(f64, Prf)> = None;
    for &th in grid {
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for ((&p, &y), &m) in probs.iter().zip(truth_pos).zip(mask) {
            if !m {
                continue;
            }
            match (p >= th, y) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        let prf = Prf::from_counts(tp, fp, fn_, tn);
        if best.as_ref().map(|(_, b)| prf.f1 > b.f1).unwrap_or(true) {
            best = Some((th, prf));
        }
    }
    let (th, prf) = best.expect("non-empty grid");
    if prf.f1 == 0.0 {
        let idle = vec![0u8; probs.len()];
        let truth_cls: Vec<u8> = truth_pos.iter().map(|&b| b as u8).collect();
        let prf = frame_metrics(&idle, &truth_cls, mask, 1)?;
        return Ok((1.0, prf));
    }
    Ok((th, prf))
}

/// Decision rules. The default is a validation-tuned threshold for the
/// binary task and plain argmax for the type task; per-class one-vs-rest
/// thresholds are available as an alternative mode.
#[derive(Debug, Clone)]
pub enum DecisionRule {
    Threshold(f64),
    Argmax,
    /// (class id, threshold) pairs for classes >= 1.
    PerClassThresholds(Vec<(u8, f64)>),
}

/// Per-frame class decisions from backchannel probabilities (T x C).
pub fn decide_classes(probs: &Array2<f32>, rule: &DecisionRule) -> Result<Vec<u8>, EvalError> {
    match rule {
        DecisionRule::Threshold(th) => {
            if probs.ncols() != 2 {
                return Err(EvalError::InvalidArgument(format!(
                    "threshold rule needs 2 classes, got {}",
                    probs.ncols()
                )));
            }
            Ok(probs.rows().into_iter().map(|r| (r[1] as f64 >= *th) as u8).collect())
        }
        DecisionRule::Argmax => Ok(probs
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = (0usize, f32::NEG_INFINITY);
                for (c, &p) in r.iter().enumerate() {
                    if p > best.1 {
                        best = (c, p);
                    }
                }
                best.0 as u8
            })
            .collect()),
        DecisionRule::PerClassThresholds(ths) => Ok(probs
            .rows()
            .into_iter()
            .map(|r| {
                let mut best: Option<(u8, f32)> = None;
                for &(class, th) in ths {
                    let p = r[class as usize];
                    if p as f64 >= th && best.map(|(_, bp)| p > bp).unwrap_or(true) {
                        best = Some((class, p));
                    }
                }
                best.map(|(c, _)| c).unwrap_or(0)
            })
            .collect()),
    }
}

/// Test-input manipulation for the prosody-sensitivity protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manipulation {
    None,
    /// Native: per-window RMS of the speaker channel flattened to its global RMS.
    IntensityFlat,
    /// Externally resynthesized audio from a sibling directory that mirrors
    /// the corpus layout.
    PitchFlat,
}

impl Manipulation {
    pub fn tag(&self) -> &'static str {
        match self {
            Manipulation::None => "none",
            Manipulation::IntensityFlat => "intensity-flat",
            Manipulation::PitchFlat => "pitch-flat",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub task: Task,
    pub split: String,
    pub manipulation: Manipulation,
    pub pitch_flat_dir: Option<PathBuf>,
    pub context_secs: f64,
    pub label_cfg: LabelConfig,
    /// Per-class one-vs-rest thresholds instead of the default rule.
    pub per_class_thresholds: bool,
}

impl EvalOptions {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            split: "test".into(),
            manipulation: Manipulation::None,
            pitch_flat_dir: None,
            context_secs: 5.0,
            label_cfg: LabelConfig::default(),
            per_class_thresholds: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: u8,
    pub name: String,
    pub positive_rate: f64,
    pub prf: Prf,
    pub always_positive: Prf,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub task: Task,
    pub split: String,
    pub manipulation: String,
    pub context_secs: f64,
    pub thresholds: Option<Vec<(u8, f64)>>,
    pub rows: Vec<ClassReport>,
    pub sessions: usize,
    pub frames: usize,
}

impl EvalReport {
    pub fn row(&self, class: u8) -> &ClassReport {
        self.rows.iter().find(|r| r.class == class).expect("class present")
    }

    /// Human-readable table; `baseline` adds deltas against an
    /// unmanipulated run.
    pub fn format_table(&self, baseline: Option<&EvalReport>) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "task={:?} split={} manipulation={} context={}s sessions={} frames={}\n",
            self.task, self.split, self.manipulation, self.context_secs, self.sessions,
            self.frames
        ));
        if let Some(ths) = &self.thresholds {
            let s: Vec<String> = ths.iter().map(|(c, t)| format!("class {c}: {t:.2}")).collect();
            out.push_str(&format!("thresholds: {}\n", s.join(", ")));
        }
        out.push_str(&format!(
            "{:<12} {:>8} {:>9} {:>8} {:>8} {:>10}\n",
            "class", "F1", "Prec", "Recall", "rate", "random-F1"
        ));
        for row in &self.rows {
            let delta = baseline
                .and_then(|b| b.rows.iter().find(|r| r.class == row.class))
                .map(|b| format!(" ({:+.2})", (row.prf.f1 - b.prf.f1) * 100.0))
                .unwrap_or_default();
            out.push_str(&format!(
                "{:<12} {:>7.2}{} {:>8.2} {:>8.2} {:>8.4} {:>10.2}\n",
                row.name,
                row.prf.f1 * 100.0,
                delta,
                row.prf.precision * 100.0,
                row.prf.recall * 100.0,
                row.positive_rate,
                row.always_positive.f1 * 100.0,
            ));
        }
        out
    }
}

fn manipulation_mutator<'a>(
    manipulation: &'a Manipulation,
    pitch_dir: Option<&'a Path>,
    listener: usize,
) -> impl Fn(&str, audio::StereoAudio) -> Result<audio::StereoAudio, LabelError> + Sync + 'a {
    move |name: &str, raw: audio::StereoAudio| match manipulation {
        Manipulation::None => Ok(raw),
        Manipulation::IntensityFlat => {
            let speaker = 1 - listener;
            audio::flatten_intensity(&raw, speaker, 50.0).map_err(LabelError::from)
        }
        Manipulation::PitchFlat => {
            let dir = pitch_dir.ok_or_else(|| {
                LabelError::MissingAudio("pitch-flat requires --pitch-flat-dir".into())
            })?;
            let path = dir.join(name).join("audio.wav");
            if !path.exists() {
                return Err(LabelError::MissingAudio(path.display().to_string()));
            }
            audio::read_wav_stereo(&path).map_err(LabelError::from)
        }
    }
}

fn load_eval_dataset(
    model: &VapModel<f32>,
    corpus: &Path,
    split: &str,
    opts: &EvalOptions,
    manipulation: &Manipulation,
) -> Result<Dataset, EvalError> {
    let mut cfg = opts.label_cfg.clone();
    cfg.frame_rate = model.config().frame_rate;
    let mutator = manipulation_mutator(manipulation, opts.pitch_flat_dir.as_deref(), cfg.listener);
    let ds = assemble_dataset(
        corpus,
        split,
        opts.task,
        &cfg,
        &FeatureSource::Mel(model.config()),
        &mutator,
    )
    .map_err(|e| match e {
        LabelError::MissingAudio(p) if *manipulation == Manipulation::PitchFlat => {
            EvalError::MissingManipulatedAudio(p)
        }
        other => EvalError::Label(other),
    })?;
    Ok(ds)
}

fn window_frames(context_secs: f64, frame_rate: u32) -> usize {
    ((context_secs * frame_rate as f64).round() as usize).max(1)
}

/// Backchannel class probabilities for every session, windowed forward.
fn dataset_bc_probs(
    model: &VapModel<f32>,
    dataset: &Dataset,
    window: usize,
) -> Result<Vec<Array2<f32>>, EvalError> {
    dataset
        .items
        .par_iter()
        .map(|item| {
            let out = model.forward(&item.feats[0], &item.feats[1], Some(window))?;
            out.bc_probs.ok_or_else(|| {
                EvalError::InvalidArgument("checkpoint has no backchannel head".into())
            })
        })
        .collect()
}

/// Zero-shot backchannel score per frame for every session.
fn dataset_zero_shot(
    model: &VapModel<f32>,
    dataset: &Dataset,
    window: usize,
    listener: usize,
) -> Result<Vec<Vec<f64>>, EvalError> {
    dataset
        .items
        .par_iter()
        .map(|item| {
            let out = model.forward(&item.feats[0], &item.feats[1], Some(window))?;
            if out.vap_probs.is_none() {
                return Err(EvalError::InvalidArgument(
                    "checkpoint has no projection head".into(),
                ));
            }
            Ok((0..out.len())
                .map(|t| zero_shot_bc_score(&out.vap_distribution(t), listener))
                .collect())
        })
        .collect()
}

fn pool_labels(dataset: &Dataset) -> (Vec<u8>, Vec<bool>) {
    let mut truth = Vec::new();
    let mut mask = Vec::new();
    for item in &dataset.items {
        truth.extend_from_slice(&item.labels.bc_class);
        mask.extend_from_slice(&item.labels.bc_mask);
    }
    (truth, mask)
}

fn report_rows(
    task: Task,
    pred: &[u8],
    truth: &[u8],
    mask: &[bool],
) -> Result<Vec<ClassReport>, EvalError> {
    let mut rows = Vec::new();
    for &class in task.positive_classes() {
        let prf = frame_metrics(pred, truth, mask, class)?;
        let ap = always_positive_metrics(truth, mask, class)?;
        let positives = truth.iter().zip(mask).filter(|(&c, &m)| m && c == class).count();
        let unmasked = mask.iter().filter(|&&m| m).count();
        rows.push(ClassReport {
            class,
            name: task.class_name(class).to_string(),
            positive_rate: positive_rate_counts(positives, unmasked),
            prf,
            always_positive: ap,
        });
    }
    Ok(rows)
}

/// Thresholds tuned on the validation split (unmanipulated), one per
/// positive class.
pub fn tune_thresholds(
    model: &VapModel<f32>,
    corpus: &Path,
    opts: &EvalOptions,
) -> Result<Vec<(u8, f64)>, EvalError> {
    let val = load_eval_dataset(model, corpus, "val", opts, &Manipulation::None)?;
    let window = window_frames(opts.context_secs, model.config().frame_rate);
    let probs = dataset_bc_probs(model, &val, window)?;
    let (truth, mask) = pool_labels(&val);
    let grid = default_threshold_grid();
    let mut out = Vec::new();
    for &class in opts.task.positive_classes() {
        let mut scores = Vec::with_capacity(truth.len());
        for p in &probs {
            for row in p.rows() {
                scores.push(row[class as usize] as f64);
            }
        }
        let truth_pos: Vec<bool> = truth.iter().map(|&c| c == class).collect();
        let (th, _) = sweep_threshold(&scores, &truth_pos, &mask, &grid)?;
        out.push((class, th));
    }
    Ok(out)
}

/// Full evaluation protocol: thresholds from validation (when the decision
/// rule needs them), forward over the requested split with the requested
/// manipulation, pooled frame-wise metrics per class.
pub fn evaluate_run(
    model: &VapModel<f32>,
    corpus: &Path,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let window = window_frames(opts.context_secs, model.config().frame_rate);
    let rule = match (opts.task, opts.per_class_thresholds) {
        (Task::Timing, false) => {
            let ths = tune_thresholds(model, corpus, opts)?;
            DecisionRule::Threshold(ths[0].1)
        }
        (Task::Type, false) => DecisionRule::Argmax,
        (_, true) => DecisionRule::PerClassThresholds(tune_thresholds(model, corpus, opts)?),
    };
    let dataset = load_eval_dataset(model, corpus, &opts.split, opts, &opts.manipulation)?;
    let probs = dataset_bc_probs(model, &dataset, window)?;
    let mut pred = Vec::new();
    for p in &probs {
        pred.extend(decide_classes(p, &rule)?);
    }
    let (truth, mask) = pool_labels(&dataset);
    let rows = report_rows(opts.task, &pred, &truth, &mask)?;
    let thresholds = match &rule {
        DecisionRule::Threshold(th) => Some(vec![(1u8, *th)]),
        DecisionRule::PerClassThresholds(ths) => Some(ths.clone()),
        DecisionRule::Argmax => None,
    };
    Ok(EvalReport {
        task: opts.task,
        split: opts.split.clone(),
        manipulation: opts.manipulation.tag().to_string(),
        context_secs: opts.context_secs,
        thresholds,
        rows,
        sessions: dataset.items.len(),
        frames: dataset.stats.frames,
    })
}

/// Zero-shot protocol: score frames straight off the projection
/// distribution, sweep the threshold on validation, report on `split`.
pub fn zero_shot_run(
    model: &VapModel<f32>,
    corpus: &Path,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let listener = opts.label_cfg.listener;
    let window = window_frames(opts.context_secs, model.config().frame_rate);
    let mut binary_opts = opts.clone();
    binary_opts.task = Task::Timing;

    let val = load_eval_dataset(model, corpus, "val", &binary_opts, &Manipulation::None)?;
    let val_scores: Vec<f64> =
        dataset_zero_shot(model, &val, window, listener)?.into_iter().flatten().collect();
    let (val_truth, val_mask) = pool_labels(&val);
    let truth_pos: Vec<bool> = val_truth.iter().map(|&c| c == 1).collect();
    let (th, _) = sweep_threshold(&val_scores, &truth_pos, &val_mask, &default_threshold_grid())?;

    let test =
        load_eval_dataset(model, corpus, &binary_opts.split, &binary_opts, &Manipulation::None)?;
    let scores = dataset_zero_shot(model, &test, window, listener)?;
    let mut pred = Vec::new();
    for s in &scores {
        pred.extend(s.iter().map(|&p| (p >= th) as u8));
    }
    let (truth, mask) = pool_labels(&test);
    let rows = report_rows(Task::Timing, &pred, &truth, &mask)?;
    Ok(EvalReport {
        task: Task::Timing,
        split: binary_opts.split,
        manipulation: "none".into(),
        context_secs: opts.context_secs,
        thresholds: Some(vec![(1, th)]),
        rows,
        sessions: test.items.len(),
        frames: test.stats.frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions() {
        let truth = vec![0u8, 1, 0, 1, 1];
        let mask = vec![true; 5];
        let prf = frame_metrics(&truth.clone(), &truth, &mask, 1).unwrap();
        assert_eq!((prf.f1, prf.precision, prf.recall), (1.0, 1.0, 1.0));
    }

    /// Always-positive identities at published operating points: with
    /// positive rate p, precision = p, recall = 1, F1 = 2p/(1+p).
    #[test]
    fn always_positive_identities() {
        for &(p, want_f1) in &[(0.0739f64, 0.1376f64), (0.0537, 0.1019), (0.0182, 0.0357)] {
            let n = 10_000usize;
            let positives = (p * n as f64).round() as usize;
            let mut truth = vec![0u8; n];
            for slot in truth.iter_mut().take(positives) {
                *slot = 1;
            }
            let mask = vec![true; n];
            let prf = always_positive_metrics(&truth, &mask, 1).unwrap();
            assert!((prf.precision - p).abs() < 1e-9);
            assert_eq!(prf.recall, 1.0);
            assert!((prf.f1 - want_f1).abs() < 1e-4, "p={p}: f1={}", prf.f1);
            assert!((prf.f1 - 2.0 * p / (1.0 + p)).abs() < 1e-9);
        }
    }

    #[test]
    fn counts_conserve_unmasked_frames() {
        let truth = vec![0u8, 1, 2, 1, 0, 2];
        let pred = vec![1u8, 1, 0, 2, 0, 2];
        let mask = vec![true, true, false, true, true, true];
        for class in [0u8, 1, 2] {
            let prf = frame_metrics(&pred, &truth, &mask, class).unwrap();
            assert_eq!(prf.total(), 5);
        }
    }

    #[test]
    fn sweep_examples() {
        // probs [0.9, 0.1], labels [1, 0]: best F1 = 1 at the lowest grid
        // threshold that excludes 0.1, which is 0.11.
        let (th, prf) =
            sweep_threshold(&[0.9, 0.1], &[true, false], &[true, true], &default_threshold_grid())
                .unwrap();
        assert!((th - 0.11).abs() < 1e-9);
        assert_eq!(prf.f1, 1.0);

        // No positives anywhere: predict nothing at threshold 1.0.
        let (th, prf) = sweep_threshold(
            &[0.3, 0.6, 0.9],
            &[false, false, false],
            &[true, true, true],
            &default_threshold_grid(),
        )
        .unwrap();
        assert_eq!(th, 1.0);
        assert_eq!(prf.f1, 0.0);
        assert_eq!(prf.fp, 0);
    }

    #[test]
    fn sweep_random_independent_converges_to_always_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let p = 0.1;
        let truth: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p).collect();
        let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mask = vec![true; n];
        let (_, prf) = sweep_threshold(&probs, &truth, &mask, &default_threshold_grid()).unwrap();
        let expect = 2.0 * p / (1.0 + p);
        assert!((prf.f1 - expect).abs() < 0.02, "{} vs {}", prf.f1, expect);
    }

    #[test]
    fn decide_rules() {
        let probs = Array2::from_shape_vec((2, 2), vec![0.49f32, 0.51, 0.9, 0.1]).unwrap();
        let d = decide_classes(&probs, &DecisionRule::Threshold(0.5)).unwrap();
        assert_eq!(d, vec![1, 0]);

        let probs3 = Array2::from_shape_vec((2, 3), vec![0.1f32, 0.2, 0.7, 0.4, 0.3, 0.3]).unwrap();
        let d = decide_classes(&probs3, &DecisionRule::Argmax).unwrap();
        assert_eq!(d, vec![2, 0]);

        // Exact tie: lowest class index wins.
        let tie = Array2::from_shape_vec((1, 3), vec![0.4f32, 0.3, 0.3]).unwrap();
        let d = decide_classes(&tie, &DecisionRule::Argmax).unwrap();
        assert_eq!(d, vec![0]);
        let tie2 = Array2::from_shape_vec((1, 3), vec![0.2f32, 0.4, 0.4]).unwrap();
        let d = decide_classes(&tie2, &DecisionRule::Argmax).unwrap();
        assert_eq!(d, vec![1]);

        let d = decide_classes(
            &probs3,
            &DecisionRule::PerClassThresholds(vec![(1, 0.25), (2, 0.5)]),
        )
        .unwrap();
        assert_eq!(d, vec![2, 1]);

        assert!(decide_classes(&probs3, &DecisionRule::Threshold(0.5)).is_err());
    }

    #[test]
    fn length_mismatch_detected() {
        assert!(matches!(
            frame_metrics(&[0, 1], &[0], &[true], 1),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    proptest! {
        /// Recall and false positives are monotone in the threshold.
        #[test]
        fn threshold_monotonicity(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 400;
            let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let truth: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.2).collect();
            let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.9).collect();
            let mut last_recall = f64::INFINITY;
            let mut last_fp = u64::MAX;
            for th in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let pred: Vec<u8> = probs.iter().map(|&p| (p >= th) as u8).collect();
                let truth_cls: Vec<u8> = truth.iter().map(|&b| b as u8).collect();
                let prf = frame_metrics(&pred, &truth_cls, &mask, 1).unwrap();
                prop_assert!(prf.recall <= last_recall + 1e-12);
                prop_assert!(prf.fp <= last_fp);
                last_recall = prf.recall;
                last_fp = prf.fp;
            }
        }

        /// Flipping predictions on masked frames never changes any metric.
        #[test]
        fn masked_frames_are_inert(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 300;
            let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0u8..3)).collect();
            let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.8).collect();
            let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0u8..3)).collect();
            let mut flipped = pred.clone();
            for (p, &m) in flipped.iter_mut().zip(&mask) {
                if !m {
                    *p = (*p + 1) % 3;
                }
            }
            for class in [1u8, 2] {
                let a = frame_metrics(&pred, &truth, &mask, class).unwrap();
                let b = frame_metrics(&flipped, &truth, &mask, class).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
