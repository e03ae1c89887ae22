//! Deterministic synthetic two-channel dialogue generator.
//!
//! The speaker channel is a sequence of harmonic-tone "utterances" with F0
//! contours and amplitude envelopes; the listener channel holds short tone
//! bursts placed by rule. Two cue types drive the listener:
//!
//! - continuer cue: the utterance ends with a falling F0 and a pause; a
//!   continuer burst follows 300-700 ms after the end.
//! - assessment cue: the utterance ends with a loud (intensity-peak)
//!   segment; an assessment burst follows 300-700 ms after it.
//!
//! Annotations are emitted from the same timeline that renders the audio,
//! so labels are exact by construction. Flattening the speaker channel's
//! intensity removes the assessment cue but leaves the continuer cue (pauses
//! stay silent), which gives the prosody-manipulation comparison a known
//! direction.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{write_wav_stereo, AudioError, StereoAudio, WavEncoding, SAMPLE_RATE};
use crate::labeling::{make_bc_labels, BcEvent, BcKind, LabelConfig, Task, VadSegment};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("audio error: {0}")]
    Audio(#[from] AudioError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialize error: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub session_secs: f64,
    pub splits: SplitCounts,
    /// Speaker fundamental range in Hz.
    pub f0_range: (f64, f64),
    /// Probability that an utterance carries each cue.
    pub continuer_rate: f64,
    pub assessment_rate: f64,
    /// Fraction of events annotated as unclassifiable.
    pub other_rate: f64,
    /// Cue-to-onset delay range in seconds.
    pub bc_delay: (f64, f64),
    /// Backchannel token length range in seconds.
    pub bc_len: (f64, f64),
    pub utt_len: (f64, f64),
    /// Pause after utterances without an event.
    pub pause: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            session_secs: 480.0,
            splits: SplitCounts { train: 40, val: 5, test: 5 },
            f0_range: (120.0, 240.0),
            continuer_rate: 0.55,
            assessment_rate: 0.18,
            other_rate: 0.02,
            bc_delay: (0.3, 0.7),
            bc_len: (0.2, 0.4),
            utt_len: (1.5, 3.5),
            pause: (0.5, 1.2),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidConfig(m));
        if self.session_secs < 20.0 {
            return fail("session_secs must be >= 20".into());
        }
        if self.continuer_rate < 0.0
            || self.assessment_rate < 0.0
            || self.continuer_rate + self.assessment_rate > 1.0
        {
            return fail("cue rates must be non-negative and sum to <= 1".into());
        }
        if !(0.0..=1.0).contains(&self.other_rate) {
            return fail("other_rate must be in [0,1]".into());
        }
        if self.bc_delay.0 <= 0.0 || self.bc_delay.1 < self.bc_delay.0 {
            return fail("bc_delay must be positive and ordered".into());
        }
        if self.bc_len.0 <= 0.0 || self.bc_len.1 < self.bc_len.0 {
            return fail("bc_len must be positive and ordered".into());
        }
        if self.f0_range.0 < 50.0 || self.f0_range.1 <= self.f0_range.0 {
            return fail("f0_range must be ordered and above 50 Hz".into());
        }
        Ok(())
    }

    pub fn session_seed(&self, index: usize) -> u64 {
        self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Render a harmonic tone into `out[start..start+len]` with per-10 ms
/// constant F0 from `f0_at` and per-sample amplitude from `amp_at` (both
/// take seconds relative to the tone start).
fn render_tone(
    out: &mut [f32],
    start: usize,
    len: usize,
    f0_at: &dyn Fn(f64) -> f64,
    amp_at: &dyn Fn(f64) -> f64,
    harmonics: &[(f64, f64)],
) {
    let sr = SAMPLE_RATE as f64;
    let seg = (sr * 0.010) as usize;
    let mut theta = 0.0f64;
    let mut i = 0usize;
    while i < len {
        let seg_len = seg.min(len - i);
        let f0 = f0_at(i as f64 / sr);
        let dtheta = 2.0 * std::f64::consts::PI * f0 / sr;
        for j in 0..seg_len {
            let idx = start + i + j;
            if idx >= out.len() {
                return;
            }
            theta += dtheta;
            let t_rel = (i + j) as f64 / sr;
            let amp = amp_at(t_rel);
            let mut v = 0.0f64;
            for &(mult, w) in harmonics {
                v += w * (theta * mult).sin();
            }
            out[idx] += (v * amp) as f32;
        }
        theta %= 2.0 * std::f64::consts::PI;
        i += seg_len;
    }
}

fn ramp_env(len_secs: f64, base: f64, ramp: f64) -> impl Fn(f64) -> f64 {
    move |t| {
        let up = (t / ramp).clamp(0.0, 1.0);
        let down = ((len_secs - t) / ramp).clamp(0.0, 1.0);
        base * up.min(down)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Cue {
    None,
    Continuer,
    Assessment,
}

/// One synthetic session: audio, backchannel events, and speech segments.
/// Samples are quantized to the PCM16 grid so a write/read cycle is exact.
pub fn generate_dialogue(
    cfg: &SynthConfig,
    session_seed: u64,
) -> Result<(StereoAudio, Vec<BcEvent>, Vec<VadSegment>), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(session_seed);
    let sr = SAMPLE_RATE as f64;
    let n = (cfg.session_secs * sr) as usize;
    let mut ch0 = vec![0.0f32; n];
    let mut ch1 = vec![0.0f32; n];
    let mut events = Vec::new();
    let mut segments = Vec::new();

    let uni = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| lo + rng.random::<f64>() * (hi - lo);

    let mut t = uni(&mut rng, (0.3, 0.8));
    loop {
        let utt_len = uni(&mut rng, cfg.utt_len);
        // Leave room for the utterance, a delayed burst, and a pause.
        if t + utt_len + 2.5 > cfg.session_secs {
            break;
        }
        let roll: f64 = rng.random();
        let cue = if roll < cfg.continuer_rate {
            Cue::Continuer
        } else if roll < cfg.continuer_rate + cfg.assessment_rate {
            Cue::Assessment
        } else {
            Cue::None
        };

        let f0 = uni(&mut rng, cfg.f0_range);
        let wander_phase = rng.random::<f64>() * std::f64::consts::TAU;
        let base_amp = uni(&mut rng, (0.22, 0.34));
        let fall_start = utt_len - 0.3;
        let peak_start = utt_len - 0.4;

        let f0_at = move |t_rel: f64| {
            let wander = 1.0 + 0.05 * (t_rel * 2.0 + wander_phase).sin();
            let fall = if cue == Cue::Continuer && t_rel > fall_start {
                // Linear fall to 65% across the final 300 ms.
                1.0 - 0.35 * ((t_rel - fall_start) / 0.3).clamp(0.0, 1.0)
            } else {
                1.0
            };
            f0 * wander * fall
        };
        let amp_at = move |t_rel: f64| {
            let env = ramp_env(utt_len, 1.0, 0.03)(t_rel);
            let peak = if cue == Cue::Assessment && t_rel > peak_start { 2.4 } else { 1.0 };
            base_amp * env * peak
        };
        let start = (t * sr) as usize;
        let len = (utt_len * sr) as usize;
        render_tone(
            &mut ch0,
            start,
            len,
            &f0_at,
            &amp_at,
            &[(1.0, 0.6), (2.0, 0.3), (3.0, 0.15)],
        );
        let utt_end = t + utt_len;
        segments.push(VadSegment { channel: 0, start: t, end: utt_end });

        if cue != Cue::None {
            let delay = uni(&mut rng, cfg.bc_delay);
            let bc_len = uni(&mut rng, cfg.bc_len);
            let onset = utt_end + delay;
            let kind = if rng.random::<f64>() < cfg.other_rate {
                BcKind::Other
            } else if cue == Cue::Continuer {
                BcKind::Continuer
            } else {
                BcKind::Assessment
            };
            let (bc_f0, bc_amp): (f64, f64) = match kind {
                BcKind::Continuer | BcKind::Other => (170.0, 0.30),
                BcKind::Assessment => (280.0, 0.45),
            };
            let bc_start = (onset * sr) as usize;
            let bc_samples = (bc_len * sr) as usize;
            let rise = matches!(kind, BcKind::Assessment);
            let bc_f0_at = move |t_rel: f64| {
                if rise {
                    bc_f0 * (1.0 + 0.15 * (t_rel / bc_len))
                } else {
                    bc_f0 * (1.0 - 0.10 * (t_rel / bc_len))
                }
            };
            let bc_amp_at = ramp_env(bc_len, bc_amp, 0.02);
            render_tone(
                &mut ch1,
                bc_start,
                bc_samples,
                &bc_f0_at,
                &bc_amp_at,
                &[(1.0, 0.7), (2.0, 0.3)],
            );
            let offset = onset + bc_len;
            events.push(BcEvent { onset, offset, channel: 1, kind });
            segments.push(VadSegment { channel: 1, start: onset, end: offset });
            t = offset + uni(&mut rng, (0.15, 0.5));
        } else {
            t = utt_end + uni(&mut rng, cfg.pause);
        }
    }

    for ch in [&mut ch0, &mut ch1] {
        for v in ch.iter_mut() {
            *v = (v.clamp(-1.0, 1.0) * 32767.0).round() / 32767.0;
        }
    }
    let audio = StereoAudio::new(ch0, ch1, SAMPLE_RATE)?;
    Ok((audio, events, segments))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub sessions: usize,
    pub audio_hours: f64,
    pub events_by_kind: BTreeMap<String, usize>,
    pub continuer_assessment_ratio: f64,
    /// Positive-frame rate of the timing task at 10 Hz with the default lead.
    pub positive_rate: f64,
}

/// Generate a full corpus on disk in the standard layout:
/// `<out>/<session>/{audio.wav,bc.jsonl,vad.jsonl}` plus `manifest.json` and
/// `summary.json`.
pub fn generate_corpus(cfg: &SynthConfig, out: &Path) -> Result<CorpusSummary, SynthError> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let total = cfg.splits.train + cfg.splits.val + cfg.splits.test;
    let names: Vec<String> = (0..total).map(|i| format!("s{i:03}")).collect();

    let results: Result<Vec<(Vec<BcEvent>, f64)>, SynthError> = names
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let (audio, events, segments) = generate_dialogue(cfg, cfg.session_seed(i))?;
            let dir = out.join(name);
            std::fs::create_dir_all(&dir)?;
            write_wav_stereo(&dir.join("audio.wav"), &audio, WavEncoding::Pcm16)?;
            let mut bc = String::new();
            for ev in &events {
                bc.push_str(&serde_json::to_string(ev)?);
                bc.push('\n');
            }
            std::fs::write(dir.join("bc.jsonl"), bc)?;
            let mut vad = String::new();
            for seg in &segments {
                vad.push_str(&serde_json::to_string(seg)?);
                vad.push('\n');
            }
            std::fs::write(dir.join("vad.jsonl"), vad)?;
            Ok((events, audio.duration_secs()))
        })
        .collect();
    let results = results?;

    let mut sessions = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let split = if i < cfg.splits.train {
            "train"
        } else if i < cfg.splits.train + cfg.splits.val {
            "val"
        } else {
            "test"
        };
        sessions.insert(name.clone(), split.to_string());
    }
    let manifest = serde_json::json!({ "sessions": sessions });
    std::fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;

    // Corpus-level statistics, with the positive rate measured through the
    // actual labeling path.
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    let mut hours = 0.0;
    let mut positives = 0usize;
    let mut unmasked = 0usize;
    let label_cfg = LabelConfig::default();
    for (events, dur) in &results {
        hours += dur / 3600.0;
        for ev in events {
            let key = match ev.kind {
                BcKind::Continuer => "continuer",
                BcKind::Assessment => "assessment",
                BcKind::Other => "other",
            };
            *by_kind.entry(key.into()).or_insert(0) += 1;
        }
        let (class, mask) = make_bc_labels(events, *dur, Task::Timing, &label_cfg);
        for (&c, &m) in class.iter().zip(&mask) {
            if m {
                unmasked += 1;
                if c == 1 {
                    positives += 1;
                }
            }
        }
    }
    let positive_rate = positives as f64 / unmasked.max(1) as f64;
    if !(0.05..=0.15).contains(&positive_rate) {
        return Err(SynthError::InvalidConfig(format!(
            "generated positive rate {positive_rate:.4} outside [0.05, 0.15]; adjust cue rates"
        )));
    }
    let continuer = *by_kind.get("continuer").unwrap_or(&0) as f64;
    let assessment = *by_kind.get("assessment").unwrap_or(&1) as f64;
    let summary = CorpusSummary {
        sessions: total,
        audio_hours: hours,
        events_by_kind: by_kind,
        continuer_assessment_ratio: continuer / assessment.max(1.0),
        positive_rate,
    };
    std::fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::rms_contour;

    fn quick_cfg() -> SynthConfig {
        SynthConfig {
            session_secs: 60.0,
            splits: SplitCounts { train: 2, val: 1, test: 1 },
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = quick_cfg();
        let (a_audio, a_events, a_segs) = generate_dialogue(&cfg, 5).unwrap();
        let (b_audio, b_events, b_segs) = generate_dialogue(&cfg, 5).unwrap();
        assert_eq!(a_audio.channel(0), b_audio.channel(0));
        assert_eq!(a_audio.channel(1), b_audio.channel(1));
        assert_eq!(a_events, b_events);
        assert_eq!(a_segs, b_segs);
        let (c_audio, ..) = generate_dialogue(&cfg, 6).unwrap();
        assert_ne!(a_audio.channel(0), c_audio.channel(0));
    }

    #[test]
    fn zero_assessment_rate_gives_no_assessments() {
        let cfg = SynthConfig { assessment_rate: 0.0, other_rate: 0.0, ..quick_cfg() };
        let (_, events, _) = generate_dialogue(&cfg, 1).unwrap();
        assert!(!events.is_empty());
        assert!(events.iter().all(|e| e.kind == BcKind::Continuer));
    }

    #[test]
    fn positive_rate_in_band_for_long_session() {
        let cfg = SynthConfig { session_secs: 480.0, ..SynthConfig::default() };
        let (_, events, _) = generate_dialogue(&cfg, 3).unwrap();
        let (class, mask) =
            make_bc_labels(&events, cfg.session_secs, Task::Timing, &LabelConfig::default());
        let unmasked = mask.iter().filter(|&&m| m).count();
        let positives = class.iter().zip(&mask).filter(|(&c, &m)| m && c == 1).count();
        let rate = positives as f64 / unmasked as f64;
        assert!((0.05..=0.15).contains(&rate), "positive rate {rate}");
    }

    #[test]
    fn listener_energy_only_inside_events() {
        let cfg = quick_cfg();
        let (audio, events, _) = generate_dialogue(&cfg, 7).unwrap();
        let sr = SAMPLE_RATE as f64;
        let margin = (0.010 * sr) as usize;
        let inside = |i: usize| {
            events.iter().any(|e| {
                let lo = (e.onset * sr) as usize;
                let hi = (e.offset * sr) as usize;
                i + margin >= lo && i < hi + margin
            })
        };
        for (i, &v) in audio.channel(1).iter().enumerate() {
            if v != 0.0 {
                assert!(inside(i), "listener energy at sample {i} outside events");
            }
        }
        // and every event interval has real energy
        for e in &events {
            let lo = (e.onset * sr) as usize;
            let hi = (e.offset * sr) as usize;
            let seg = &audio.channel(1)[lo..hi];
            let energy: f32 = seg.iter().map(|v| v * v).sum::<f32>() / seg.len() as f32;
            assert!(energy.sqrt() > 1e-3, "event at {} has no energy", e.onset);
        }
    }

    /// Cue detectors on raw features predict events before any training:
    /// a decision stump per cue has F1 > 0.6, and the intensity-peak stump
    /// collapses on flattened audio.
    #[test]
    fn cues_are_detectable_and_flattening_destroys_peaks() {
        let cfg = SynthConfig { session_secs: 120.0, other_rate: 0.0, ..quick_cfg() };
        let (audio, events, segments) = generate_dialogue(&cfg, 11).unwrap();
        let utts: Vec<&VadSegment> = segments.iter().filter(|s| s.channel == 0).collect();

        let predict_events = |samples: &[f32]| -> Vec<(f64, bool)> {
            // (utterance end, predicts event) from the intensity-peak stump:
            // final 0.35 s RMS vs middle RMS.
            let sr = SAMPLE_RATE as f64;
            utts.iter()
                .map(|u| {
                    let end = (u.end * sr) as usize;
                    let peak_lo = end.saturating_sub((0.35 * sr) as usize);
                    let mid_lo = (u.start * sr) as usize + (0.3 * sr) as usize;
                    let mid_hi = peak_lo.max(mid_lo + 1600);
                    let rms = |s: &[f32]| {
                        (s.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>()
                            / s.len().max(1) as f64)
                            .sqrt()
                    };
                    let peak = rms(&samples[peak_lo..end.min(samples.len())]);
                    let mid =
                        rms(&samples[mid_lo.min(samples.len() - 1)..mid_hi.min(samples.len())]);
                    (u.end, peak > 1.5 * mid)
                })
                .collect()
        };

        let f1_of = |preds: &[(f64, bool)], want_kind: BcKind| -> f64 {
            let truth_for = |end: f64| {
                events.iter().any(|e| e.kind == want_kind && e.onset > end && e.onset < end + 1.0)
            };
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for &(end, p) in preds {
                match (p, truth_for(end)) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        };

        // Peak stump finds assessments on clean audio...
        let clean = predict_events(audio.channel(0));
        let f1_clean = f1_of(&clean, BcKind::Assessment);
        assert!(f1_clean > 0.6, "assessment stump F1 on clean audio: {f1_clean}");

        // ...and dies on intensity-flattened audio.
        let flat = crate::audio::flatten_intensity(&audio, 0, 50.0).unwrap();
        let flattened = predict_events(flat.channel(0));
        let f1_flat = f1_of(&flattened, BcKind::Assessment);
        assert!(f1_flat < 0.2, "assessment stump F1 on flattened audio: {f1_flat}");

        // Pause-after-utterance stump finds events in general (pauses are
        // preserved under flattening by the silence guard).
        let pause_stump: Vec<(f64, bool)> = utts
            .iter()
            .map(|u| {
                let gap_has_speech =
                    utts.iter().any(|v| v.start > u.end && v.start < u.end + 0.25);
                (u.end, !gap_has_speech)
            })
            .collect();
        let f1_pause = {
            let truth_for =
                |end: f64| events.iter().any(|e| e.onset > end && e.onset < end + 1.0);
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for &(end, p) in &pause_stump {
                match (p, truth_for(end)) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
            2.0 * tp / (2.0 * tp + fp + fn_)
        };
        assert!(f1_pause > 0.6, "pause stump F1: {f1_pause}");

        // Flattening keeps pauses silent.
        let contour = rms_contour(flat.channel(0), 0.05, SAMPLE_RATE).unwrap();
        let silent_windows = contour.iter().filter(|&&r| r < 1e-4).count();
        assert!(silent_windows > 0, "flattened audio lost its pauses");
    }

    #[test]
    fn corpus_layout_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            session_secs: 30.0,
            splits: SplitCounts { train: 2, val: 1, test: 1 },
            ..SynthConfig::default()
        };
        let summary = generate_corpus(&cfg, dir.path()).unwrap();
        assert_eq!(summary.sessions, 4);
        let manifest = crate::labeling::CorpusManifest::load(dir.path()).unwrap();
        assert_eq!(manifest.sessions_in_split("train").len(), 2);
        assert_eq!(manifest.sessions_in_split("val"), vec!["s002".to_string()]);
        assert_eq!(manifest.sessions_in_split("test"), vec!["s003".to_string()]);
        for name in manifest.sessions.keys() {
            for file in ["audio.wav", "bc.jsonl", "vad.jsonl"] {
                assert!(dir.path().join(name).join(file).exists(), "{name}/{file}");
            }
        }

        // Regeneration digests identically.
        let wav = std::fs::read(dir.path().join("s000/audio.wav")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        generate_corpus(&cfg, dir2.path()).unwrap();
        let wav2 = std::fs::read(dir2.path().join("s000/audio.wav")).unwrap();
        assert_eq!(wav, wav2);
        assert_eq!(
            std::fs::read(dir.path().join("s000/bc.jsonl")).unwrap(),
            std::fs::read(dir2.path().join("s000/bc.jsonl")).unwrap()
        );
    }

    #[test]
    fn kind_ratio_near_three_to_one() {
        // Sessions long enough for the ratio to stabilize.
        let cfg = SynthConfig {
            session_secs: 480.0,
            splits: SplitCounts { train: 4, val: 1, test: 1 },
            ..SynthConfig::default()
        };
        let mut continuer = 0usize;
        let mut assessment = 0usize;
        for i in 0..6 {
            let (_, events, _) = generate_dialogue(&cfg, cfg.session_seed(i)).unwrap();
            continuer += events.iter().filter(|e| e.kind == BcKind::Continuer).count();
            assessment += events.iter().filter(|e| e.kind == BcKind::Assessment).count();
        }
        let ratio = continuer as f64 / assessment as f64;
        assert!((2.5..=3.5).contains(&ratio), "continuer:assessment = {ratio}");
    }

    #[test]
    fn wav_roundtrip_is_bitwise_after_generation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg();
        let (audio, ..) = generate_dialogue(&cfg, 2).unwrap();
        let path = dir.path().join("x.wav");
        write_wav_stereo(&path, &audio, WavEncoding::Pcm16).unwrap();
        let back = crate::audio::read_wav_stereo(&path).unwrap();
        assert_eq!(back.channel(0), audio.channel(0));
        assert_eq!(back.channel(1), audio.channel(1));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SynthConfig { continuer_rate: 0.9, assessment_rate: 0.3, ..quick_cfg() };
        assert!(matches!(generate_dialogue(&cfg, 0), Err(SynthError::InvalidConfig(_))));
    }
}
