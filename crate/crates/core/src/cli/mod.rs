//! The `vapbc` command line: corpus generation, two-stage training,
//! evaluation (including prosody manipulations and context ablations),
//! zero-shot scoring, RTF benchmarks, and the streaming server.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 runtime
//! failure. Diagnostics go to stderr; machine-readable results go to files
//! under the command's --out directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::evaluation::{evaluate_run, zero_shot_run, EvalOptions, EvalReport, Manipulation};
use crate::labeling::{LabelConfig, Task};
use crate::manifest::RunManifest;
use crate::model::{load_checkpoint, store_checkpoint, VapModel};
use crate::streaming::{measure_rtf, serve, Endpoint, RtfReport};
use crate::synth::{generate_corpus, SynthConfig};
use crate::training::{finetune, pretrain, FinetuneInit, Method, Stage, TrainConfig};

#[derive(Parser)]
#[command(
    name = "vapbc",
    version,
    about = "Frame-wise backchannel timing and type prediction on stereo dialogue audio"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dialogue corpus.
    Synth(SynthArgs),
    /// Stage 1: train projection + voice-activity heads on a corpus.
    Pretrain(PretrainArgs),
    /// Stage 2: train the backchannel head (baseline, st_no_pt, st_pt, mt_pt).
    Finetune(FinetuneArgs),
    /// Frame-wise evaluation with optional manipulations and context sweep.
    Eval(EvalArgs),
    /// Zero-shot backchannel scoring from a pre-trained checkpoint.
    Zeroshot(ZeroshotArgs),
    /// Real-time factor benchmark.
    Rtf(RtfArgs),
    /// Serve streaming predictions over TCP or stdio.
    Stream(StreamArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON config file (partial; missing keys take defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    session_secs: Option<f64>,
    #[arg(long)]
    sessions_train: Option<usize>,
    #[arg(long)]
    sessions_val: Option<usize>,
    #[arg(long)]
    sessions_test: Option<usize>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// JSON config file (partial; missing keys take defaults).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_len: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    val_interval: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    positive_weight: Option<f64>,
    #[arg(long)]
    d_channel: Option<usize>,
    #[arg(long)]
    n_bands: Option<usize>,
    #[arg(long)]
    frame_rate: Option<u32>,
    #[arg(long)]
    max_context: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lead: Option<f64>,
    #[arg(long)]
    listener: Option<usize>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// baseline | st_no_pt | st_pt | mt_pt
    #[arg(long)]
    method: String,
    /// timing | type
    #[arg(long)]
    task: String,
    /// Pre-trained checkpoint (required for st_pt and mt_pt).
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// timing | type
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "test")]
    split: String,
    /// none | intensity-flat | pitch-flat
    #[arg(long, default_value = "none")]
    manipulation: String,
    /// Directory mirroring the corpus layout with pitch-flattened audio.
    #[arg(long)]
    pitch_flat_dir: Option<PathBuf>,
    /// Context window seconds; repeat for an ablation sweep.
    #[arg(long, num_args = 1.., default_values_t = [5.0])]
    context: Vec<f64>,
    /// Also measure RTF per context (ablation-style report).
    #[arg(long)]
    rtf: bool,
    #[arg(long)]
    per_class_thresholds: bool,
    #[arg(long)]
    lead: Option<f64>,
    #[arg(long)]
    listener: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZeroshotArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 5.0)]
    context: f64,
    #[arg(long)]
    lead: Option<f64>,
    #[arg(long)]
    listener: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RtfArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Context window seconds; repeat to sweep.
    #[arg(long, num_args = 1.., default_values_t = [5.0])]
    context: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Measure on this WAV (2 channels, 16 kHz) instead of synthetic audio.
    #[arg(long)]
    audio: Option<PathBuf>,
    /// Length of the synthetic measurement audio.
    #[arg(long, default_value_t = 90.0)]
    synth_secs: f64,
    #[arg(long, default_value_t = 7)]
    synth_seed: u64,
    #[arg(long)]
    listener: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    context: f64,
    /// Must match the checkpoint's frame rate.
    #[arg(long)]
    frame_rate: Option<u32>,
    #[arg(long, conflicts_with = "stdio")]
    port: Option<u16>,
    #[arg(long)]
    stdio: bool,
    /// timing | type; must match the checkpoint's head.
    #[arg(long)]
    task: Option<String>,
    #[arg(long, default_value_t = 1)]
    listener: usize,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn classify_train(e: crate::training::TrainError) -> CliError {
    use crate::training::TrainError as E;
    match &e {
        E::InvalidConfig(_)
        | E::ConfigMismatch(_)
        | E::CheckpointMissing(_)
        | E::EmptyCorpus(_) => validation(e),
        E::Label(inner) => classify_label_ref(inner, e.to_string()),
        _ => runtime(e),
    }
}

fn classify_label_ref(e: &crate::labeling::LabelError, msg: String) -> CliError {
    use crate::labeling::LabelError as E;
    match e {
        E::MissingManifest(_)
        | E::MissingAudio(_)
        | E::MissingFeatures(_)
        | E::ParseError { .. }
        | E::NegativeTime { .. }
        | E::OverlapError { .. } => CliError::Validation(msg),
        _ => CliError::Runtime(msg),
    }
}

fn classify_eval(e: crate::evaluation::EvalError) -> CliError {
    use crate::evaluation::EvalError as E;
    match &e {
        E::MissingManipulatedAudio(_) | E::InvalidArgument(_) | E::MissingThreshold => {
            validation(e)
        }
        E::Label(inner) => classify_label_ref(inner, e.to_string()),
        _ => runtime(e),
    }
}

/// Parse argv and dispatch; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                0
            } else {
                1
            };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Finetune(args) => cmd_finetune(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Zeroshot(args) => cmd_zeroshot(args),
        Command::Rtf(args) => cmd_rtf(args),
        Command::Stream(args) => cmd_stream(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn parse_task(s: &str) -> Result<Task, CliError> {
    match s {
        "timing" => Ok(Task::Timing),
        "type" => Ok(Task::Type),
        other => Err(CliError::Validation(format!(
            "unknown task \"{other}\" (expected timing or type)"
        ))),
    }
}

fn parse_manipulation(s: &str) -> Result<Manipulation, CliError> {
    match s {
        "none" => Ok(Manipulation::None),
        "intensity-flat" => Ok(Manipulation::IntensityFlat),
        "pitch-flat" => Ok(Manipulation::PitchFlat),
        other => Err(CliError::Validation(format!("unknown manipulation \"{other}\""))),
    }
}

fn load_json_config<T: serde::de::DeserializeOwned + Default>(
    path: Option<&Path>,
) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = std::fs::read(p)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
        }
    }
}

/// Precedence: flag > config file > default.
fn resolve_synth_config(
    file: Option<&Path>,
    seed: Option<u64>,
    session_secs: Option<f64>,
    splits: (Option<usize>, Option<usize>, Option<usize>),
) -> Result<SynthConfig, CliError> {
    let mut cfg: SynthConfig = load_json_config(file)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = session_secs {
        cfg.session_secs = s;
    }
    if let Some(n) = splits.0 {
        cfg.splits.train = n;
    }
    if let Some(n) = splits.1 {
        cfg.splits.val = n;
    }
    if let Some(n) = splits.2 {
        cfg.splits.test = n;
    }
    Ok(cfg)
}

/// Owned mirror of [`TrainFlags`] so config resolution is testable without
/// clap in the way.
#[derive(Default)]
struct TrainFlagsResolved {
    config: Option<PathBuf>,
    steps: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    batch_len: Option<usize>,
    batch_size: Option<usize>,
    val_interval: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    positive_weight: Option<f64>,
    d_channel: Option<usize>,
    n_bands: Option<usize>,
    frame_rate: Option<u32>,
    max_context: Option<usize>,
    dropout: Option<f64>,
    lead: Option<f64>,
    listener: Option<usize>,
}

impl From<&TrainFlags> for TrainFlagsResolved {
    fn from(f: &TrainFlags) -> Self {
        Self {
            config: f.config.clone(),
            steps: f.steps,
            lr: f.lr,
            seed: f.seed,
            batch_len: f.batch_len,
            batch_size: f.batch_size,
            val_interval: f.val_interval,
            alpha: f.alpha,
            beta: f.beta,
            gamma: f.gamma,
            positive_weight: f.positive_weight,
            d_channel: f.d_channel,
            n_bands: f.n_bands,
            frame_rate: f.frame_rate,
            max_context: f.max_context,
            dropout: f.dropout,
            lead: f.lead,
            listener: f.listener,
        }
    }
}

fn resolve_train_config(flags: &TrainFlagsResolved) -> Result<TrainConfig, CliError> {
    let mut cfg: TrainConfig = load_json_config(flags.config.as_deref())?;
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(cfg.max_steps, flags.steps);
    set!(cfg.lr, flags.lr);
    set!(cfg.seed, flags.seed);
    set!(cfg.batch_len, flags.batch_len);
    set!(cfg.batch_size, flags.batch_size);
    set!(cfg.val_interval, flags.val_interval);
    set!(cfg.alpha, flags.alpha);
    set!(cfg.beta, flags.beta);
    set!(cfg.gamma, flags.gamma);
    set!(cfg.positive_weight, flags.positive_weight);
    set!(cfg.model.d_channel, flags.d_channel);
    set!(cfg.model.n_bands, flags.n_bands);
    set!(cfg.model.frame_rate, flags.frame_rate);
    set!(cfg.model.max_context, flags.max_context);
    set!(cfg.model.dropout, flags.dropout);
    set!(cfg.label.lead_secs, flags.lead);
    set!(cfg.label.listener, flags.listener);
    cfg.model.d_concat = 2 * cfg.model.d_channel;
    cfg.label.frame_rate = cfg.model.frame_rate;
    Ok(cfg)
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let cfg = resolve_synth_config(
        args.config.as_deref(),
        args.seed,
        args.session_secs,
        (args.sessions_train, args.sessions_val, args.sessions_test),
    )?;
    cfg.validate().map_err(validation)?;
    let summary = generate_corpus(&cfg, &args.out).map_err(runtime)?;
    eprintln!(
        "generated {} sessions, {:.2} h audio, positive rate {:.3}, continuer:assessment {:.2}",
        summary.sessions,
        summary.audio_hours,
        summary.positive_rate,
        summary.continuer_assessment_ratio
    );
    let mut manifest = RunManifest::new(
        "synth",
        serde_json::to_value(&cfg).expect("serializable"),
        vec![cfg.seed],
    );
    manifest.add_output(&args.out);
    manifest.write(&args.out).map_err(runtime)?;
    Ok(())
}

fn cmd_pretrain(args: PretrainArgs) -> Result<(), CliError> {
    let mut cfg = resolve_train_config(&(&args.flags).into())?;
    cfg.stage = Stage::Pretrain;
    let (model, log) = pretrain(&args.corpus, &cfg).map_err(classify_train)?;
    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    let ckpt = args.out.join("pretrain.vapb");
    store_checkpoint(&model, &ckpt).map_err(runtime)?;
    log.write_jsonl(&args.out.join("train_log.jsonl")).map_err(runtime)?;
    eprintln!(
        "pretrained {} params, best val l_vap {:.4} -> {}",
        model.param_count(),
        log.best_val.unwrap_or(f64::NAN),
        ckpt.display()
    );
    let mut manifest = RunManifest::new(
        "pretrain",
        serde_json::to_value(&cfg).expect("serializable"),
        vec![cfg.seed],
    );
    manifest.add_input(&args.corpus).map_err(runtime)?;
    manifest.add_output(&ckpt);
    manifest.write(&args.out).map_err(runtime)?;
    Ok(())
}

fn cmd_finetune(args: FinetuneArgs) -> Result<(), CliError> {
    let mut cfg = resolve_train_config(&(&args.flags).into())?;
    cfg.stage = Stage::Finetune;
    cfg.task = parse_task(&args.task)?;
    cfg.method = Method::parse(&args.method).ok_or_else(|| {
        CliError::Validation(format!(
            "unknown method \"{}\" (baseline | st_no_pt | st_pt | mt_pt)",
            args.method
        ))
    })?;
    let init = match &args.init {
        Some(path) => FinetuneInit::FromCheckpoint(path),
        None => FinetuneInit::Fresh,
    };
    let (model, log) = finetune(&args.corpus, init, &cfg).map_err(classify_train)?;
    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    let ckpt = args.out.join("model.vapb");
    store_checkpoint(&model, &ckpt).map_err(runtime)?;
    log.write_jsonl(&args.out.join("train_log.jsonl")).map_err(runtime)?;
    eprintln!(
        "finetuned ({:?}, {:?}): best val F1 {:.4} -> {}",
        cfg.method,
        cfg.task,
        log.best_val.unwrap_or(f64::NAN),
        ckpt.display()
    );
    let mut manifest = RunManifest::new(
        "finetune",
        serde_json::to_value(&cfg).expect("serializable"),
        vec![cfg.seed],
    );
    manifest.add_input(&args.corpus).map_err(runtime)?;
    if let Some(p) = &args.init {
        manifest.add_input(p).map_err(runtime)?;
    }
    manifest.add_output(&ckpt);
    manifest.write(&args.out).map_err(runtime)?;
    Ok(())
}

fn load_ckpt_for_task(path: &Path, task: Task) -> Result<VapModel<f32>, CliError> {
    if !path.exists() {
        return Err(CliError::Validation(format!("checkpoint not found: {}", path.display())));
    }
    let model = load_checkpoint(path).map_err(validation)?;
    if model.config().bc_classes != task.bc_classes() {
        return Err(CliError::Validation(format!(
            "config mismatch: checkpoint has bc_classes={}, task {:?} needs {}",
            model.config().bc_classes,
            task,
            task.bc_classes()
        )));
    }
    Ok(model)
}

fn eval_label_cfg(
    model: &VapModel<f32>,
    lead: Option<f64>,
    listener: Option<usize>,
) -> LabelConfig {
    let mut cfg = LabelConfig { frame_rate: model.config().frame_rate, ..LabelConfig::default() };
    if let Some(l) = lead {
        cfg.lead_secs = l;
    }
    if let Some(l) = listener {
        cfg.listener = l;
    }
    cfg
}

fn write_reports(
    out: Option<&Path>,
    reports: &[(EvalReport, Option<EvalReport>)],
    rtf: &[RtfReport],
    command: &str,
    config: serde_json::Value,
    inputs: &[&Path],
) -> Result<(), CliError> {
    let mut table = String::new();
    for (report, baseline) in reports {
        table.push_str(&report.format_table(baseline.as_ref()));
        table.push('\n');
    }
    for r in rtf {
        table.push_str(&format!(
            "context {:>5.1}s: RTF {:.3} (p50 {:.1} ms, p95 {:.1} ms, max {:.1} ms, {} frames)\n",
            r.context_secs, r.rtf, r.p50_ms, r.p95_ms, r.max_ms, r.frames
        ));
    }
    print!("{table}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(runtime)?;
        let mut jsonl = String::new();
        for (report, _) in reports {
            jsonl.push_str(&serde_json::to_string(report).expect("serializable"));
            jsonl.push('\n');
        }
        for r in rtf {
            jsonl.push_str(&serde_json::to_string(r).expect("serializable"));
            jsonl.push('\n');
        }
        std::fs::write(dir.join("report.jsonl"), jsonl).map_err(runtime)?;
        std::fs::write(dir.join("report.txt"), &table).map_err(runtime)?;
        let mut manifest = RunManifest::new(command, config, vec![]);
        for input in inputs {
            manifest.add_input(input).map_err(runtime)?;
        }
        manifest.add_output(&dir.join("report.jsonl"));
        manifest.write(dir).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let task = parse_task(&args.task)?;
    let manipulation = parse_manipulation(&args.manipulation)?;
    if manipulation == Manipulation::PitchFlat && args.pitch_flat_dir.is_none() {
        return Err(CliError::Validation(
            "pitch-flat evaluation requires --pitch-flat-dir".into(),
        ));
    }
    let model = load_ckpt_for_task(&args.ckpt, task)?;
    let label_cfg = eval_label_cfg(&model, args.lead, args.listener);

    let mut reports = Vec::new();
    let mut rtf_reports = Vec::new();
    for &context in &args.context {
        let mut opts = EvalOptions::new(task);
        opts.split = args.split.clone();
        opts.context_secs = context;
        opts.label_cfg = label_cfg.clone();
        opts.per_class_thresholds = args.per_class_thresholds;
        opts.pitch_flat_dir = args.pitch_flat_dir.clone();

        // Manipulated runs also evaluate the unmanipulated input so the
        // report can print deltas.
        let baseline = if manipulation != Manipulation::None {
            opts.manipulation = Manipulation::None;
            Some(evaluate_run(&model, &args.corpus, &opts).map_err(classify_eval)?)
        } else {
            None
        };
        opts.manipulation = manipulation.clone();
        let report = evaluate_run(&model, &args.corpus, &opts).map_err(classify_eval)?;
        reports.push((report, baseline));

        if args.rtf {
            let audio = first_split_audio(&args.corpus, &args.split)?;
            let shared = Arc::new(load_ckpt_for_task(&args.ckpt, task)?);
            let report =
                measure_rtf(&shared, &audio, context, label_cfg.listener).map_err(runtime)?;
            rtf_reports.push(report);
        }
    }
    write_reports(
        args.out.as_deref(),
        &reports,
        &rtf_reports,
        "eval",
        serde_json::json!({
            "task": args.task, "split": args.split, "manipulation": args.manipulation,
            "context": args.context, "per_class_thresholds": args.per_class_thresholds,
        }),
        &[&args.ckpt, &args.corpus],
    )
}

fn first_split_audio(corpus: &Path, split: &str) -> Result<crate::audio::StereoAudio, CliError> {
    let manifest = crate::labeling::CorpusManifest::load(corpus)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let names = manifest.sessions_in_split(split);
    let first = names
        .first()
        .ok_or_else(|| CliError::Validation(format!("split '{split}' is empty")))?;
    crate::audio::read_wav_stereo(&corpus.join(first).join("audio.wav")).map_err(validation)
}

fn cmd_zeroshot(args: ZeroshotArgs) -> Result<(), CliError> {
    if !args.ckpt.exists() {
        return Err(CliError::Validation(format!(
            "checkpoint not found: {}",
            args.ckpt.display()
        )));
    }
    let model = load_checkpoint(&args.ckpt).map_err(validation)?;
    let label_cfg = eval_label_cfg(&model, args.lead, args.listener);
    let mut opts = EvalOptions::new(Task::Timing);
    opts.split = args.split.clone();
    opts.context_secs = args.context;
    opts.label_cfg = label_cfg;
    let report = zero_shot_run(&model, &args.corpus, &opts).map_err(classify_eval)?;
    write_reports(
        args.out.as_deref(),
        &[(report, None)],
        &[],
        "zeroshot",
        serde_json::json!({"split": args.split, "context": args.context}),
        &[&args.ckpt, &args.corpus],
    )
}

fn cmd_rtf(args: RtfArgs) -> Result<(), CliError> {
    if !args.ckpt.exists() {
        return Err(CliError::Validation(format!(
            "checkpoint not found: {}",
            args.ckpt.display()
        )));
    }
    let model = Arc::new(load_checkpoint(&args.ckpt).map_err(validation)?);
    let audio = match &args.audio {
        Some(path) => crate::audio::read_wav_stereo(path).map_err(validation)?,
        None => {
            let cfg = SynthConfig {
                session_secs: args.synth_secs,
                splits: crate::synth::SplitCounts { train: 1, val: 0, test: 0 },
                ..SynthConfig::default()
            };
            crate::synth::generate_dialogue(&cfg, args.synth_seed).map_err(validation)?.0
        }
    };
    let listener = args.listener.unwrap_or(1);
    let mut reports = Vec::new();
    for &context in &args.context {
        let mut runs = Vec::new();
        for _ in 0..args.runs.max(1) {
            runs.push(measure_rtf(&model, &audio, context, listener).map_err(runtime)?);
        }
        runs.sort_by(|a, b| a.rtf.partial_cmp(&b.rtf).unwrap());
        let median = runs.swap_remove(runs.len() / 2);
        reports.push(median);
    }
    write_reports(
        args.out.as_deref(),
        &[],
        &reports,
        "rtf",
        serde_json::json!({"context": args.context, "runs": args.runs}),
        &[&args.ckpt],
    )
}

fn cmd_stream(args: StreamArgs) -> Result<(), CliError> {
    if !args.ckpt.exists() {
        return Err(CliError::Validation(format!(
            "checkpoint not found: {}",
            args.ckpt.display()
        )));
    }
    let model = load_checkpoint(&args.ckpt).map_err(validation)?;
    if let Some(rate) = args.frame_rate {
        if rate != model.config().frame_rate {
            return Err(CliError::Validation(format!(
                "config mismatch: checkpoint runs at {} Hz, --frame-rate says {rate}",
                model.config().frame_rate
            )));
        }
    }
    if let Some(task) = &args.task {
        let task = parse_task(task)?;
        if model.config().bc_classes != task.bc_classes() {
            return Err(CliError::Validation(format!(
                "config mismatch: checkpoint has bc_classes={}, task {:?} needs {}",
                model.config().bc_classes,
                task,
                task.bc_classes()
            )));
        }
    }
    let endpoint = match (args.port, args.stdio) {
        (Some(port), false) => Endpoint::Tcp(port),
        (None, true) => Endpoint::Stdio,
        _ => {
            return Err(CliError::Validation(
                "choose exactly one of --port <n> or --stdio".into(),
            ))
        }
    };
    serve(Arc::new(model), endpoint, args.context, args.listener).map_err(runtime)
}
