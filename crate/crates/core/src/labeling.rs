//! Per-frame supervision: voice-activity bits, projection-state targets, and
//! backchannel class targets with the pre-onset lead rule.
//!
//! Frame membership uses the frame midpoint against half-open intervals
//! everywhere: frame `t` at rate R covers [t/R, (t+1)/R) and its midpoint is
//! (t + 0.5)/R.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError};
use crate::model::ModelError;
use crate::state_codec::{encode_state, project_future_activity, BinGrid, CodecError};

/// Default lead: frames this far before an onset are positive.
pub const DEFAULT_LEAD_SECS: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("parse error at {path}:{line}: {msg}")]
    ParseError { path: String, line: usize, msg: String },
    #[error("negative or reversed time at {path}:{line}")]
    NegativeTime { path: String, line: usize },
    #[error("overlapping events on channel {channel} near {at:.3}s")]
    OverlapError { channel: usize, at: f64 },
    #[error("missing manifest: {0}")]
    MissingManifest(String),
    #[error("missing audio: {0}")]
    MissingAudio(String),
    #[error("missing feature file: {0}")]
    MissingFeatures(String),
    #[error("codec error: {0}")]
    Codec(#[from] CodecError),
    #[error("audio error: {0}")]
    Audio(#[from] AudioError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Backchannel kinds. `Other` marks annotated tokens that fit neither type;
/// they count as plain backchannels in the timing task and are excluded
/// (masked) from the type task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Continuer,
    Assessment,
    Other,
}

/// An annotated backchannel utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcEvent {
    pub onset: f64,
    pub offset: f64,
    pub channel: usize,
    pub kind: BcKind,
}

/// A speech interval on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadSegment {
    pub channel: usize,
    pub start: f64,
    pub end: f64,
}

/// Prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Binary: backchannel vs not.
    Timing,
    /// Three classes: none / continuer / assessment.
    Type,
}

impl Task {
    pub fn bc_classes(&self) -> usize {
        match self {
            Task::Timing => 2,
            Task::Type => 3,
        }
    }

    /// Class ids carrying backchannels (0 is always "none").
    pub fn positive_classes(&self) -> &'static [u8] {
        match self {
            Task::Timing => &[1],
            Task::Type => &[1, 2],
        }
    }

    pub fn class_name(&self, class: u8) -> &'static str {
        match (self, class) {
            (_, 0) => "non-bc",
            (Task::Timing, 1) => "backchannel",
            (Task::Type, 1) => "continuer",
            (Task::Type, 2) => "assessment",
            _ => "unknown",
        }
    }
}

/// Per-frame supervision for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    /// Current voice activity per channel.
    pub vad: Vec<[bool; 2]>,
    /// Projection-state target per frame.
    pub vap_state: Vec<u8>,
    /// Backchannel class per frame (see [`Task`]).
    pub bc_class: Vec<u8>,
    /// Frames contributing to the backchannel loss and to evaluation.
    pub bc_mask: Vec<bool>,
}

impl FrameLabels {
    pub fn len(&self) -> usize {
        self.vad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vad.is_empty()
    }
}

/// Label construction knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub frame_rate: u32,
    pub lead_secs: f64,
    /// Channel whose backchannels are predicted.
    pub listener: usize,
    pub grid: BinGrid,
    /// When true, frames inside a backchannel utterance count as negatives
    /// instead of being masked out.
    pub interior_negative: bool,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            frame_rate: 10,
            lead_secs: DEFAULT_LEAD_SECS,
            listener: 1,
            grid: BinGrid::default(),
            interior_negative: false,
        }
    }
}

pub fn load_annotations(path: &Path) -> Result<Vec<BcEvent>, LabelError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            LabelError::MissingAudio(path.display().to_string())
        } else {
            LabelError::Io(e)
        }
    })?;
    let reader = std::io::BufReader::new(file);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: BcEvent = serde_json::from_str(&line).map_err(|e| LabelError::ParseError {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if ev.onset < 0.0 || ev.offset <= ev.onset {
            return Err(LabelError::NegativeTime {
                path: path.display().to_string(),
                line: i + 1,
            });
        }
        if ev.channel > 1 {
            return Err(LabelError::ParseError {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("channel {} out of range", ev.channel),
            });
        }
        events.push(ev);
    }
    events.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap());
    for c in 0..2 {
        let mut last_end = f64::NEG_INFINITY;
        for ev in events.iter().filter(|e| e.channel == c) {
            if ev.onset < last_end {
                return Err(LabelError::OverlapError { channel: c, at: ev.onset });
            }
            last_end = ev.offset;
        }
    }
    Ok(events)
}

pub fn load_vad_segments(path: &Path) -> Result<Vec<VadSegment>, LabelError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut segments = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seg: VadSegment = serde_json::from_str(&line).map_err(|e| LabelError::ParseError {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if seg.start < 0.0 || seg.end <= seg.start {
            return Err(LabelError::NegativeTime {
                path: path.display().to_string(),
                line: i + 1,
            });
        }
        segments.push(seg);
    }
    Ok(segments)
}

fn frame_midpoint(t: usize, frame_rate: u32) -> f64 {
    (t as f64 + 0.5) / frame_rate as f64
}

/// Frames (by midpoint) inside [lo, hi), clipped to [0, t_max).
fn frame_range(lo: f64, hi: f64, t_max: usize, frame_rate: u32) -> std::ops::Range<usize> {
    let rate = frame_rate as f64;
    // Conservative under-approximation of the first candidate, then scan.
    let mut t = ((lo * rate - 0.5).floor() as i64 - 1).max(0) as usize;
    while t < t_max && frame_midpoint(t, frame_rate) < lo {
        t += 1;
    }
    let start = t;
    while t < t_max && frame_midpoint(t, frame_rate) < hi {
        t += 1;
    }
    start..t
}

/// Backchannel class and mask tracks.
///
/// For every listener event, frames whose midpoint falls in
/// [onset - lead, onset) become positive (clipped at the stream start); lead
/// windows of later events overwrite earlier ones. Frames inside
/// [onset, offset) are masked (or negative with `interior_negative`). In the
/// type task, `other` events mask both their lead window and interior.
pub fn make_bc_labels(
    events: &[BcEvent],
    duration: f64,
    task: Task,
    cfg: &LabelConfig,
) -> (Vec<u8>, Vec<bool>) {
    let t_max = (duration * cfg.frame_rate as f64).floor() as usize;
    let mut class = vec![0u8; t_max];
    let mut mask = vec![true; t_max];

    let mut listener_events: Vec<&BcEvent> =
        events.iter().filter(|e| e.channel == cfg.listener).collect();
    listener_events.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap());

    // Lead windows first (later events win on overlap)...
    for ev in &listener_events {
        let label: Option<u8> = match (task, ev.kind) {
            (Task::Timing, _) => Some(1),
            (Task::Type, BcKind::Continuer) => Some(1),
            (Task::Type, BcKind::Assessment) => Some(2),
            (Task::Type, BcKind::Other) => None, // exclusion only
        };
        let range =
            frame_range((ev.onset - cfg.lead_secs).max(0.0), ev.onset, t_max, cfg.frame_rate);
        for t in range {
            match label {
                Some(c) => {
                    class[t] = c;
                    mask[t] = true;
                }
                None => {
                    class[t] = 0;
                    mask[t] = false;
                }
            }
        }
    }
    // ...then utterance interiors, which take precedence.
    for ev in &listener_events {
        for t in frame_range(ev.onset, ev.offset, t_max, cfg.frame_rate) {
            class[t] = 0;
            mask[t] = cfg.interior_negative;
        }
    }
    (class, mask)
}

/// Frame-wise voice activity: frame t is active on a channel when its
/// midpoint lies inside any of that channel's half-open intervals.
pub fn make_vad_labels(
    segments: &[VadSegment],
    duration: f64,
    frame_rate: u32,
) -> Result<Vec<[bool; 2]>, LabelError> {
    let t_max = (duration * frame_rate as f64).floor() as usize;
    let mut per_channel: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for seg in segments {
        if seg.channel > 1 {
            return Err(LabelError::OverlapError { channel: seg.channel, at: seg.start });
        }
        per_channel[seg.channel].push((seg.start, seg.end));
    }
    for (c, spans) in per_channel.iter_mut().enumerate() {
        spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(LabelError::OverlapError { channel: c, at: w[1].0 });
            }
        }
    }
    let mut vad = vec![[false; 2]; t_max];
    for (c, spans) in per_channel.iter().enumerate() {
        for &(start, end) in spans {
            for t in frame_range(start, end, t_max, frame_rate) {
                vad[t][c] = true;
            }
        }
    }
    Ok(vad)
}

/// Per-frame projection-state targets from the VAD tracks.
pub fn make_vap_targets(
    vad: &[[bool; 2]],
    frame_rate: u32,
    grid: &BinGrid,
) -> Result<Vec<u8>, LabelError> {
    let tracks: [Vec<bool>; 2] =
        [vad.iter().map(|f| f[0]).collect(), vad.iter().map(|f| f[1]).collect()];
    (0..vad.len())
        .map(|t| {
            project_future_activity(&tracks, t, frame_rate, grid)
                .map(|s| encode_state(&s.bins))
                .map_err(LabelError::from)
        })
        .collect()
}

/// All per-frame supervision for one session.
pub fn make_frame_labels(
    events: &[BcEvent],
    segments: &[VadSegment],
    duration: f64,
    task: Task,
    cfg: &LabelConfig,
) -> Result<FrameLabels, LabelError> {
    let vad = make_vad_labels(segments, duration, cfg.frame_rate)?;
    let vap_state = make_vap_targets(&vad, cfg.frame_rate, &cfg.grid)?;
    let (bc_class, bc_mask) = make_bc_labels(events, duration, task, cfg);
    Ok(FrameLabels { vad, vap_state, bc_class, bc_mask })
}

/// Corpus manifest: session name -> split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sessions: BTreeMap<String, String>,
}

impl CorpusManifest {
    pub fn load(root: &Path) -> Result<Self, LabelError> {
        let path = root.join("manifest.json");
        let bytes = std::fs::read(&path)
            .map_err(|_| LabelError::MissingManifest(path.display().to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| LabelError::ParseError {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn sessions_in_split(&self, split: &str) -> Vec<String> {
        let mut names: Vec<String> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.as_str() == split)
            .map(|(n, _)| n.clone())
            .collect();
        names.sort();
        names
    }
}

/// Per-channel model inputs for one session: raw log-mel (reference encoder)
/// or externally produced features.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub name: String,
    pub feats: [Array2<f32>; 2],
    pub labels: FrameLabels,
    pub audio_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<SessionData>,
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub sessions: usize,
    pub frames: usize,
    pub unmasked_frames: usize,
    /// Positive-frame rate per class id (excluding class 0), over unmasked
    /// frames. Computed by the evaluation module so dataset reporting and
    /// metric denominators cannot drift apart.
    pub positive_rate: BTreeMap<u8, f64>,
}

/// How session audio turns into model input features.
pub enum FeatureSource<'m> {
    /// Log-mel at the model's frame rate and band count.
    Mel(&'m crate::model::ModelConfig),
    /// External feature files `feats.c0.vft` / `feats.c1.vft` per session.
    External,
}

/// Load one split of a corpus and build supervision for `task`.
///
/// `mutate_audio` runs on each session's audio before feature extraction
/// (identity for normal runs; the evaluation harness injects intensity
/// flattening or substitutes externally manipulated files there).
pub fn assemble_dataset(
    root: &Path,
    split: &str,
    task: Task,
    cfg: &LabelConfig,
    source: &FeatureSource<'_>,
    mutate_audio: &(dyn Fn(&str, audio::StereoAudio) -> Result<audio::StereoAudio, LabelError>
          + Sync),
) -> Result<Dataset, LabelError> {
    let manifest = CorpusManifest::load(root)?;
    let names = manifest.sessions_in_split(split);
    let items: Result<Vec<SessionData>, LabelError> = names
        .par_iter()
        .map(|name| load_session(root, name, task, cfg, source, mutate_audio))
        .collect();
    let items = items?;
    let stats = dataset_stats(&items, task);
    Ok(Dataset { items, stats })
}

/// Identity `mutate_audio` for unmanipulated runs.
pub fn no_mutation(
    _name: &str,
    audio: audio::StereoAudio,
) -> Result<audio::StereoAudio, LabelError> {
    Ok(audio)
}

fn load_session(
    root: &Path,
    name: &str,
    task: Task,
    cfg: &LabelConfig,
    source: &FeatureSource<'_>,
    mutate_audio: &(dyn Fn(&str, audio::StereoAudio) -> Result<audio::StereoAudio, LabelError>
          + Sync),
) -> Result<SessionData, LabelError> {
    let dir = root.join(name);
    let audio_path = dir.join("audio.wav");
    let events = load_annotations(&dir.join("bc.jsonl"))?;
    let segments = load_vad_segments(&dir.join("vad.jsonl"))?;

    let (feats, duration) = match source {
        FeatureSource::Mel(model_cfg) => {
            if !audio_path.exists() {
                return Err(LabelError::MissingAudio(audio_path.display().to_string()));
            }
            let raw = audio::read_wav_stereo(&audio_path)?;
            let duration = raw.duration_secs();
            let audio = mutate_audio(name, raw)?;
            let ex = audio::MelExtractor::new(
                audio::SAMPLE_RATE,
                model_cfg.frame_rate,
                model_cfg.n_bands,
            )?;
            let f0 = ex.extract(audio.channel(0), 0)?.frames;
            let f1 = ex.extract(audio.channel(1), 1)?.frames;
            ([f0, f1], duration)
        }
        FeatureSource::External => {
            let mut feats = Vec::new();
            let mut rate = cfg.frame_rate;
            for c in 0..2 {
                let path = dir.join(format!("feats.c{c}.vft"));
                if !path.exists() {
                    return Err(LabelError::MissingFeatures(path.display().to_string()));
                }
                let (f, r) = crate::model::read_feature_file(&path)?;
                rate = r;
                feats.push(f);
            }
            let f1 = feats.pop().unwrap();
            let f0 = feats.pop().unwrap();
            let duration = f0.nrows() as f64 / rate as f64;
            ([f0, f1], duration)
        }
    };
    let labels = make_frame_labels(&events, &segments, duration, task, cfg)?;
    debug_assert_eq!(labels.len(), feats[0].nrows());
    Ok(SessionData { name: name.to_string(), feats, labels, audio_path })
}

fn dataset_stats(items: &[SessionData], task: Task) -> DatasetStats {
    let mut frames = 0usize;
    let mut unmasked = 0usize;
    let mut positive_rate = BTreeMap::new();
    for &class in task.positive_classes() {
        let mut pos = 0usize;
        let mut um = 0usize;
        for item in items {
            for (&c, &m) in item.labels.bc_class.iter().zip(&item.labels.bc_mask) {
                if m {
                    um += 1;
                    if c == class {
                        pos += 1;
                    }
                }
            }
        }
        positive_rate.insert(class, crate::evaluation::positive_rate_counts(pos, um));
    }
    for item in items {
        frames += item.labels.len();
        unmasked += item.labels.bc_mask.iter().filter(|&&m| m).count();
    }
    DatasetStats { sessions: items.len(), frames, unmasked_frames: unmasked, positive_rate }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg10() -> LabelConfig {
        LabelConfig { frame_rate: 10, ..LabelConfig::default() }
    }

    fn ev(onset: f64, offset: f64, kind: BcKind) -> BcEvent {
        BcEvent { onset, offset, channel: 1, kind }
    }

    #[test]
    fn lead_window_gives_five_frames_at_10hz() {
        let events = [ev(2.0, 2.3, BcKind::Continuer)];
        let (class, mask) = make_bc_labels(&events, 10.0, Task::Timing, &cfg10());
        let positives: Vec<usize> =
            class.iter().enumerate().filter(|(_, &c)| c == 1).map(|(t, _)| t).collect();
        assert_eq!(positives, vec![15, 16, 17, 18, 19]);
        // interior masked
        for t in 20..23 {
            assert!(!mask[t], "frame {t}");
            assert_eq!(class[t], 0);
        }
        assert!(mask[14] && class[14] == 0);
    }

    #[test]
    fn lead_window_clips_at_stream_start() {
        let events = [ev(0.2, 0.5, BcKind::Continuer)];
        let (class, _) = make_bc_labels(&events, 5.0, Task::Timing, &cfg10());
        let count = class.iter().filter(|&&c| c == 1).count();
        assert_eq!(count, 2);
        assert_eq!(class[0], 1);
        assert_eq!(class[1], 1);
    }

    #[test]
    fn no_events_all_negative_unmasked() {
        let (class, mask) = make_bc_labels(&[], 3.0, Task::Timing, &cfg10());
        assert_eq!(class.len(), 30);
        assert!(class.iter().all(|&c| c == 0));
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn type_task_classes_and_other_exclusion() {
        let events = [
            ev(1.0, 1.2, BcKind::Continuer),
            ev(3.0, 3.2, BcKind::Assessment),
            ev(5.0, 5.2, BcKind::Other),
        ];
        let (class, mask) = make_bc_labels(&events, 8.0, Task::Type, &cfg10());
        assert_eq!(class[7], 1); // continuer lead
        assert_eq!(class[27], 2); // assessment lead
        // other: lead window masked, not labeled
        for t in 45..50 {
            assert_eq!(class[t], 0);
            assert!(!mask[t], "frame {t}");
        }
        // in the timing task the same event is a positive
        let (class_b, mask_b) = make_bc_labels(&events, 8.0, Task::Timing, &cfg10());
        assert_eq!(class_b[47], 1);
        assert!(mask_b[47]);
    }

    #[test]
    fn overlapping_lead_windows_later_event_wins() {
        let events = [ev(1.0, 1.04, BcKind::Continuer), ev(1.3, 1.5, BcKind::Assessment)];
        let (class, mask) = make_bc_labels(&events, 3.0, Task::Type, &cfg10());
        // Frames 8 and 9 sit in both lead windows; the later event wins.
        // The first event's interior [1.0, 1.04) contains no frame midpoint.
        assert_eq!(class[8], 2);
        assert_eq!(class[9], 2);
        assert!(mask[8] && mask[9]);
    }

    #[test]
    fn interior_precedes_lead_of_next_event() {
        // Second event's lead window overlaps the first event's utterance.
        let events = [ev(1.0, 1.4, BcKind::Continuer), ev(1.6, 1.8, BcKind::Continuer)];
        let (class, mask) = make_bc_labels(&events, 3.0, Task::Timing, &cfg10());
        // Frames 10..14 are interior of event 1 -> masked even though they
        // fall inside event 2's lead window [1.1, 1.6).
        for t in 10..14 {
            assert!(!mask[t], "frame {t}");
            assert_eq!(class[t], 0);
        }
        // Frames 14..16 are lead-only.
        assert_eq!(class[14], 1);
        assert_eq!(class[15], 1);
    }

    #[test]
    fn interior_negative_flag() {
        let events = [ev(1.0, 1.4, BcKind::Continuer)];
        let cfg = LabelConfig { interior_negative: true, ..cfg10() };
        let (class, mask) = make_bc_labels(&events, 3.0, Task::Timing, &cfg);
        for t in 10..14 {
            assert!(mask[t]);
            assert_eq!(class[t], 0);
        }
    }

    #[test]
    fn vad_midpoint_rule() {
        let segs = [VadSegment { channel: 0, start: 0.0, end: 10.0 }];
        let vad = make_vad_labels(&segs, 10.0, 10).unwrap();
        assert!(vad.iter().all(|f| f[0] && !f[1]));

        // [1.0, 1.05): frame 10 midpoint is 1.05, excluded by half-open end.
        let segs = [VadSegment { channel: 0, start: 1.0, end: 1.05 }];
        let vad = make_vad_labels(&segs, 3.0, 10).unwrap();
        assert!(vad.iter().all(|f| !f[0]));

        let vad = make_vad_labels(&[], 2.0, 10).unwrap();
        assert!(vad.iter().all(|f| !f[0] && !f[1]));
    }

    #[test]
    fn vad_overlap_rejected() {
        let segs = [
            VadSegment { channel: 0, start: 0.0, end: 2.0 },
            VadSegment { channel: 0, start: 1.5, end: 3.0 },
        ];
        assert!(matches!(
            make_vad_labels(&segs, 5.0, 10),
            Err(LabelError::OverlapError { channel: 0, .. })
        ));
        // Touching intervals are fine.
        let segs = [
            VadSegment { channel: 0, start: 0.0, end: 2.0 },
            VadSegment { channel: 0, start: 2.0, end: 3.0 },
        ];
        assert!(make_vad_labels(&segs, 5.0, 10).is_ok());
    }

    #[test]
    fn vap_targets_match_brute_force() {
        // Alternating 1 s turns; compare against a from-scratch oracle.
        let rate = 10u32;
        let dur = 12.0;
        let grid = BinGrid::default();
        let mut segs = Vec::new();
        let mut t = 0.0;
        let mut ch = 0usize;
        while t < dur {
            segs.push(VadSegment { channel: ch, start: t, end: t + 1.0 });
            ch = 1 - ch;
            t += 1.0;
        }
        let vad = make_vad_labels(&segs, dur, rate).unwrap();
        let targets = make_vap_targets(&vad, rate, &grid).unwrap();

        // Oracle: direct frame counting with explicit bit packing.
        let bounds = [0usize, 2, 6, 12, 20];
        for (t, &target) in targets.iter().enumerate() {
            let mut index = 0u16;
            for c in 0..2 {
                for k in 0..4 {
                    let (lo, hi) = (t + bounds[k], t + bounds[k + 1]);
                    let active =
                        (lo..hi).filter(|&s| vad.get(s).map(|f| f[c]).unwrap_or(false)).count();
                    if active * 2 >= hi - lo {
                        index |= 1 << (7 - (4 * c + k));
                    }
                }
            }
            assert_eq!(target as u16, index, "frame {t}");
        }
    }

    #[test]
    fn vap_targets_silent_and_full_file() {
        let grid = BinGrid::default();
        let vad = vec![[false; 2]; 50];
        let targets = make_vap_targets(&vad, 10, &grid).unwrap();
        assert!(targets.iter().all(|&s| s == 0));

        // Channel 0 active for the whole file: 240 until the projection
        // horizon starts running off the end.
        let vad = vec![[true, false]; 100];
        let targets = make_vap_targets(&vad, 10, &grid).unwrap();
        for (t, &s) in targets.iter().enumerate() {
            if t + 20 <= 100 {
                assert_eq!(s, 240, "frame {t}");
            }
        }
        assert_ne!(targets[99], 240);
    }

    #[test]
    fn annotations_roundtrip_and_errors() {
        let dir = std::env::temp_dir().join("vapbc-label-tests");
        std::fs::create_dir_all(&dir).unwrap();

        let path = dir.join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_annotations(&path).unwrap().is_empty());

        let path = dir.join("two.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"onset\":2.0,\"offset\":2.2,\"channel\":1,\"kind\":\"continuer\"}\n",
                "{\"onset\":1.0,\"offset\":1.3,\"channel\":1,\"kind\":\"continuer\"}\n"
            ),
        )
        .unwrap();
        let events = load_annotations(&path).unwrap();
        assert_eq!(events.len(), 2);
        assert!(events[0].onset < events[1].onset);

        let path = dir.join("neg.jsonl");
        std::fs::write(
            &path,
            "{\"onset\":2.0,\"offset\":1.5,\"channel\":1,\"kind\":\"continuer\"}\n",
        )
        .unwrap();
        assert!(matches!(load_annotations(&path), Err(LabelError::NegativeTime { .. })));

        let path = dir.join("overlap.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"onset\":1.0,\"offset\":2.0,\"channel\":1,\"kind\":\"continuer\"}\n",
                "{\"onset\":1.5,\"offset\":2.5,\"channel\":1,\"kind\":\"assessment\"}\n"
            ),
        )
        .unwrap();
        assert!(matches!(load_annotations(&path), Err(LabelError::OverlapError { .. })));

        let path = dir.join("garbage.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(load_annotations(&path), Err(LabelError::ParseError { .. })));
    }

    #[test]
    fn isolated_lead_count_is_round_lead_times_rate() {
        for &(rate, lead) in &[(10u32, 0.5f64), (50, 0.5), (10, 0.3), (50, 0.2)] {
            let cfg = LabelConfig { frame_rate: rate, lead_secs: lead, ..LabelConfig::default() };
            let events = [ev(4.0, 4.2, BcKind::Continuer)];
            let (class, _) = make_bc_labels(&events, 10.0, Task::Timing, &cfg);
            let count = class.iter().filter(|&&c| c == 1).count();
            assert_eq!(count, (lead * rate as f64).round() as usize, "rate {rate} lead {lead}");
        }
    }
}
