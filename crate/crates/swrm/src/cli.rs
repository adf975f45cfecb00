//! Command-line surface: one binary, five subcommands covering the whole
//! workflow from corpus corruption through training to attention
//! inspection. File-based configuration with flag overrides; every
//! artifact directory also receives the fully resolved config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{AblationKind, AdapterKind, ResolvedConfig, RunConfig};
use crate::corpus::audit::{corpus_wer, sentiment_substitution_flags, substitution_error_rate};
use crate::corpus::corrupt::{corrupt_sentiment_words, CorruptionPolicy, CorruptionSpec};
use crate::corpus::{load_dataset, save_dataset, DatasetSplit, SplitName};
use crate::error::SwrmError;
use crate::eval::{compute_metrics, metrics_table, stratified_misclassification, MetricsReport};
use crate::lexicon::Lexicon;
use crate::lm::mock::MockLm;
use crate::lm::precomputed::{PrecomputedLm, CACHE_DIR_ENV};
use crate::lm::MaskedLm;
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, SwrmModel};
use crate::refiner::RefinementTrace;
use crate::tape::Tape;
use crate::train::{prepare_split, predict_split, train_seeds, TrainData, TrainOptions};
use crate::util::{derive_seed, write_jsonl};

fn parse_ablation(s: &str) -> Result<AblationKind, String> {
    s.parse()
}

fn parse_adapter(s: &str) -> Result<AdapterKind, String> {
    s.parse()
}

fn parse_policy(s: &str) -> Result<CorruptionPolicy, String> {
    s.parse()
}

#[derive(Parser)]
#[command(
    name = "swrm",
    version,
    about = "Sentiment-word refinement for multimodal sentiment analysis",
    long_about = "Detects likely sentiment-word positions in error-prone transcripts, \
                  refines their embeddings with multimodal context, and trains a fused \
                  regression model. Subcommands cover corpus corruption, auditing, \
                  training, evaluation, and attention inspection."
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inject recognition errors over sentiment words into a clean corpus.
    Corrupt(CorruptArgs),
    /// Audit a corpus: word error rate and sentiment-word substitution rate.
    Analyze(AnalyzeArgs),
    /// Train one model per seed; write checkpoints, logs, and metric reports.
    Train(ConfigArgs),
    /// Score a trained checkpoint on the configured test split.
    Evaluate(ConfigArgs),
    /// Dump per-utterance refinement traces with candidate diagnostics.
    InspectAttention(ConfigArgs),
}

/// Flags shared by the model-level commands. Values given here override
/// the config file.
#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replace the configured seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Candidates requested per masked position.
    #[arg(long)]
    k: Option<usize>,
    /// Disable a component: position, attention, or multimodal (repeatable).
    #[arg(long, value_parser = parse_ablation)]
    ablate: Vec<AblationKind>,
    /// Masked-LM adapter: "mock" (synthetic) or "real" (precomputed cache,
    /// directory from the SWRM_ADAPTER_CACHE environment variable).
    #[arg(long, value_parser = parse_adapter)]
    adapter: Option<AdapterKind>,
    /// Directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptArgs {
    /// Clean corpus to corrupt (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Directory for corrupted.jsonl and corruption-log.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of lexicon-bearing utterances to corrupt, in [0, 1].
    #[arg(long)]
    rate: f64,
    /// How replacements are spelled: phonetic-truncate clips a leading
    /// cluster ("upset" → "set"), random-vocab swaps in a neutral filler.
    #[arg(long, value_parser = parse_policy, default_value = "phonetic-truncate")]
    policy: CorruptionPolicy,
    /// Seed for choosing utterances, positions, and replacements.
    #[arg(long, default_value_t = 1111)]
    seed: u64,
    /// Sentiment lexicon files; defaults to the built-in lexicon.
    #[arg(long)]
    lexicon: Vec<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Corpus to audit (JSONL). Utterances without a reference transcript
    /// are assumed verbatim, so a never-corrupted corpus audits clean.
    #[arg(long)]
    input: PathBuf,
    /// Sentiment lexicon files; defaults to the built-in lexicon.
    #[arg(long)]
    lexicon: Vec<PathBuf>,
    /// Optional directory for audit-report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse flags and run; the process exit status reflects the result.
pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), SwrmError> {
    match cli.command {
        Command::Corrupt(args) => run_corrupt(&args),
        Command::Analyze(args) => run_analyze(&args),
        Command::Train(args) => run_train(&args),
        Command::Evaluate(args) => run_evaluate(&args),
        Command::InspectAttention(args) => run_inspect(&args),
    }
}

/// Load the config file and apply flag overrides, then resolve defaults.
fn load_config(args: &ConfigArgs) -> Result<ResolvedConfig, SwrmError> {
    let mut raw = RunConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        raw.train.seeds = Some(vec![seed]);
    }
    if let Some(k) = args.k {
        raw.k = Some(k);
    }
    if !args.ablate.is_empty() {
        raw.ablate = args.ablate.clone();
    }
    if let Some(adapter) = args.adapter {
        raw.adapter = adapter;
    }
    if let Some(out) = &args.out {
        raw.out = Some(out.clone());
    }
    let resolved = raw.resolve()?;
    resolved.validate()?;
    Ok(resolved)
}

fn require_path<'a>(
    path: &'a Option<PathBuf>,
    field: &str,
    purpose: &str,
) -> Result<&'a Path, SwrmError> {
    let path = path
        .as_deref()
        .ok_or_else(|| SwrmError::Config(format!("{purpose} requires `{field}` in the config")))?;
    if !path.exists() {
        return Err(SwrmError::Config(format!(
            "`{field}` points at {}, which does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn load_lexicons(paths: &[PathBuf]) -> Result<Lexicon, SwrmError> {
    if paths.is_empty() {
        Ok(Lexicon::builtin())
    } else {
        Lexicon::from_files(paths)
    }
}

fn build_adapter(cfg: &ResolvedConfig, root_seed: u64) -> Result<Box<dyn MaskedLm>, SwrmError> {
    match cfg.adapter {
        AdapterKind::Mock => match &cfg.mock_config {
            Some(path) => Ok(Box::new(MockLm::from_file(path)?)),
            None => Ok(Box::new(MockLm::synthetic(
                cfg.mock_dim,
                derive_seed(root_seed, "mock-lm"),
            ))),
        },
        AdapterKind::Real => {
            let lm = PrecomputedLm::open(None)?;
            log::info!("using the precomputed adapter cache from ${CACHE_DIR_ENV}");
            Ok(Box::new(lm))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SwrmError> {
    let mut json = serde_json::to_string_pretty(value).expect("report serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| SwrmError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), SwrmError> {
    fs::create_dir_all(dir).map_err(|e| SwrmError::io(dir, e))
}

fn run_corrupt(args: &CorruptArgs) -> Result<(), SwrmError> {
    let split = load_dataset(&args.input, SplitName::Train)?;
    let lexicon = load_lexicons(&args.lexicon)?;
    let spec = CorruptionSpec {
        rate: args.rate,
        policy: args.policy,
    };
    let (corrupted, records) = corrupt_sentiment_words(&split, &lexicon, &spec, args.seed)?;
    ensure_dir(&args.out)?;
    let corpus_path = args.out.join("corrupted.jsonl");
    let log_path = args.out.join("corruption-log.jsonl");
    save_dataset(&corpus_path, &corrupted)?;
    write_jsonl(&log_path, &records)?;
    println!(
        "corrupted {} of {} utterances at rate {}; wrote {} and {}",
        records.len(),
        split.len(),
        args.rate,
        corpus_path.display(),
        log_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AuditReport {
    utterances: usize,
    wer: f64,
    substitution_error_rate: f64,
}

fn run_analyze(args: &AnalyzeArgs) -> Result<(), SwrmError> {
    let mut split = load_dataset(&args.input, SplitName::Test)?;
    let lexicon = load_lexicons(&args.lexicon)?;
    for utt in &mut split.utterances {
        if utt.gold_tokens.is_none() {
            utt.gold_tokens = Some(utt.tokens.clone());
        }
    }
    let report = AuditReport {
        utterances: split.len(),
        wer: corpus_wer(&split)?,
        substitution_error_rate: substitution_error_rate(&split, &lexicon)?,
    };
    println!(
        "{} utterances: WER {:.4}, sentiment substitution rate {:.4}",
        report.utterances, report.wer, report.substitution_error_rate
    );
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let path = out.join("audit-report.json");
        write_json(&path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

struct LoadedSplit {
    split: DatasetSplit,
}

fn load_split(
    path: &Path,
    name: SplitName,
    visual_dim: &mut Option<usize>,
    acoustic_dim: &mut Option<usize>,
) -> Result<LoadedSplit, SwrmError> {
    let split = load_dataset(path, name)?;
    if split.is_empty() {
        return Err(SwrmError::Config(format!(
            "the {name} split at {} is empty",
            path.display()
        )));
    }
    let (v, a) = (split.visual_dim(), split.acoustic_dim());
    for (slot, got, label) in [(visual_dim, v, "visual"), (acoustic_dim, a, "acoustic")] {
        match *slot {
            None => *slot = Some(got),
            Some(expected) if expected != got => {
                return Err(SwrmError::Config(format!(
                    "the {name} split has {got}-dimensional {label} features, other splits have {expected}"
                )));
            }
            Some(_) => {}
        }
    }
    Ok(LoadedSplit { split })
}

fn run_train(cfg_args: &ConfigArgs) -> Result<(), SwrmError> {
    let cfg = load_config(cfg_args)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| SwrmError::Config("training requires `out` for its artifacts".into()))?;
    let train_path = require_path(&cfg.train_data, "train_data", "training")?;

    let mut visual_dim = None;
    let mut acoustic_dim = None;
    let train = load_split(train_path, SplitName::Train, &mut visual_dim, &mut acoustic_dim)?;
    let valid = match &cfg.valid_data {
        Some(path) => Some(load_split(path, SplitName::Valid, &mut visual_dim, &mut acoustic_dim)?),
        None => None,
    };
    let test = match &cfg.test_data {
        Some(path) => Some(load_split(path, SplitName::Test, &mut visual_dim, &mut acoustic_dim)?),
        None => None,
    };
    let (visual_dim, acoustic_dim) = (visual_dim.unwrap(), acoustic_dim.unwrap());

    let lexicon = load_lexicons(&cfg.lexicons)?;
    let root_seed = cfg.train.seeds[0];
    let lm = build_adapter(&cfg, root_seed)?;

    let empty = [];
    let prepared_train = prepare_split(&train.split.utterances, lm.as_ref(), &lexicon, cfg.k, &cfg.ablate)?;
    let prepared_valid = match &valid {
        Some(v) => prepare_split(&v.split.utterances, lm.as_ref(), &lexicon, cfg.k, &cfg.ablate)?,
        None => Vec::new(),
    };
    let prepared_test = match &test {
        Some(t) => prepare_split(&t.split.utterances, lm.as_ref(), &lexicon, cfg.k, &cfg.ablate)?,
        None => Vec::new(),
    };
    let data = TrainData {
        train: &prepared_train,
        valid: if prepared_valid.is_empty() { &empty } else { &prepared_valid },
        test: if prepared_test.is_empty() { &empty } else { &prepared_test },
    };

    ensure_dir(&out)?;
    let config_path = cfg.write_next_to_artifacts(&out)?;
    log::info!("resolved config written to {}", config_path.display());
    let hash = cfg.fingerprint();
    let opts = TrainOptions::from_config(&cfg);

    let outcome = train_seeds(
        &cfg.dims,
        visual_dim,
        acoustic_dim,
        &data,
        &opts,
        &cfg.train.seeds,
        &crate::fusion::CopyLabel,
        |model, seed_outcome| {
            let seed_dir = out.join(format!("seed-{}", seed_outcome.seed));
            ensure_dir(&seed_dir)?;
            save_checkpoint(&seed_dir.join("checkpoint.json"), model, &hash, seed_outcome.seed)?;
            write_jsonl(&seed_dir.join("epochs.jsonl"), &seed_outcome.history)?;
            if let Some(report) = &seed_outcome.test_report {
                write_json(&seed_dir.join("metrics.json"), report)?;
            }
            println!(
                "seed {}: {} epochs, best validation MAE {:.4}",
                seed_outcome.seed, seed_outcome.epochs_run, seed_outcome.best_valid_mae
            );
            Ok(())
        },
    )?;

    let mut rows: Vec<(String, MetricsReport)> = outcome
        .per_seed
        .iter()
        .filter_map(|o| o.test_report.map(|r| (format!("seed-{}", o.seed), r)))
        .collect();
    match outcome.mean {
        Some(mean) => {
            rows.push(("mean".into(), mean));
            write_json(&out.join("metrics-mean.json"), &mean)?;
            print!("{}", metrics_table(&rows));
        }
        None => println!("no test split configured, so no test metrics were produced"),
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

/// Rebuild a model from a checkpoint, refusing silently mismatched configs.
fn model_from_checkpoint(
    cfg: &ResolvedConfig,
    checkpoint: &Checkpoint,
    source: &Path,
) -> Result<SwrmModel, SwrmError> {
    let expected = cfg.fingerprint();
    if checkpoint.config_hash != expected {
        return Err(SwrmError::Checkpoint(format!(
            "{} was trained under config fingerprint {}, but the current config resolves to {}; \
             pass the config the checkpoint was trained with",
            source.display(),
            checkpoint.config_hash,
            expected
        )));
    }
    let mut model = SwrmModel::new(
        &cfg.dims,
        checkpoint.visual_feature_dim,
        checkpoint.acoustic_feature_dim,
    )?;
    model.store.load(&checkpoint.params)?;
    Ok(model)
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint_seed: u64,
    metrics: MetricsReport,
    /// Misclassification among utterances whose transcript lost a
    /// sentiment cue, when references are available.
    misclassified_with_substitution_errors: Option<f64>,
    misclassified_without_substitution_errors: Option<f64>,
}

fn run_evaluate(cfg_args: &ConfigArgs) -> Result<(), SwrmError> {
    let cfg = load_config(cfg_args)?;
    let checkpoint_path = require_path(&cfg.checkpoint, "checkpoint", "evaluation")?;
    let test_path = require_path(&cfg.test_data, "test_data", "evaluation")?;

    let checkpoint = load_checkpoint(checkpoint_path)?;
    let model = model_from_checkpoint(&cfg, &checkpoint, checkpoint_path)?;

    let mut visual_dim = Some(checkpoint.visual_feature_dim);
    let mut acoustic_dim = Some(checkpoint.acoustic_feature_dim);
    let test = load_split(test_path, SplitName::Test, &mut visual_dim, &mut acoustic_dim)?;

    let lexicon = load_lexicons(&cfg.lexicons)?;
    let lm = build_adapter(&cfg, checkpoint.seed)?;
    let prepared = prepare_split(&test.split.utterances, lm.as_ref(), &lexicon, cfg.k, &cfg.ablate)?;
    let (preds, labels) = predict_split(&model, &prepared, &cfg.ablate, cfg.pooling)?;
    let metrics = compute_metrics(&preds, &labels)?;

    let has_references = test
        .split
        .utterances
        .iter()
        .all(|u| u.gold_tokens.is_some());
    let (with_errors, without_errors) = if has_references {
        let flags = sentiment_substitution_flags(&test.split, &lexicon)?;
        stratified_misclassification(&preds, &labels, &flags)?
    } else {
        log::info!("no reference transcripts in the test split; skipping the stratified report");
        (None, None)
    };

    print!(
        "{}",
        metrics_table(&[(format!("seed-{}", checkpoint.seed), metrics)])
    );
    if let (Some(with), Some(without)) = (with_errors, without_errors) {
        println!(
            "misclassification with lost sentiment cues {:.4}, without {:.4}",
            with, without
        );
    }

    if let Some(out) = &cfg.out {
        ensure_dir(out)?;
        cfg.write_next_to_artifacts(out)?;
        let report = EvalReport {
            checkpoint_seed: checkpoint.seed,
            metrics,
            misclassified_with_substitution_errors: with_errors,
            misclassified_without_substitution_errors: without_errors,
        };
        let path = out.join("eval-metrics.json");
        write_json(&path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceCandidate {
    token: String,
    probability: f64,
    in_lexicon: bool,
}

#[derive(Serialize)]
struct TraceRecord {
    id: String,
    tokens: Vec<String>,
    label: f64,
    prediction: f64,
    /// Detector output; absent when position detection is ablated.
    position: Option<usize>,
    gate_open: Option<bool>,
    sentiment_candidates_per_position: Option<Vec<usize>>,
    candidates: Vec<TraceCandidate>,
    refinement: Option<RefinementTrace>,
}

fn run_inspect(cfg_args: &ConfigArgs) -> Result<(), SwrmError> {
    let cfg = load_config(cfg_args)?;
    let test_path = require_path(&cfg.test_data, "test_data", "attention inspection")?;

    let mut visual_dim = None;
    let mut acoustic_dim = None;
    let test = load_split(test_path, SplitName::Test, &mut visual_dim, &mut acoustic_dim)?;

    let lexicon = load_lexicons(&cfg.lexicons)?;
    let root_seed = cfg.train.seeds[0];
    let lm = build_adapter(&cfg, root_seed)?;
    let prepared = prepare_split(&test.split.utterances, lm.as_ref(), &lexicon, cfg.k, &cfg.ablate)?;

    let model = match &cfg.checkpoint {
        Some(path) => {
            let checkpoint = load_checkpoint(path)?;
            model_from_checkpoint(&cfg, &checkpoint, path)?
        }
        None => {
            log::warn!("no checkpoint configured; tracing an untrained model from seed {root_seed}");
            let mut model = SwrmModel::new(&cfg.dims, visual_dim.unwrap(), acoustic_dim.unwrap())?;
            model.init(root_seed);
            model
        }
    };

    let mut records = Vec::with_capacity(prepared.len());
    for p in &prepared {
        let mut tape = Tape::new();
        let bound = model.store.bind(&mut tape);
        let pass = model.forward(&mut tape, &bound, p, &cfg.ablate, cfg.pooling)?;
        let prediction = pass.predictions.values(&tape).fused;
        let candidates = p
            .detection
            .as_ref()
            .map(|d| {
                d.candidate_set
                    .candidates
                    .iter()
                    .map(|c| TraceCandidate {
                        token: c.token.clone(),
                        probability: c.probability,
                        in_lexicon: lexicon.contains(&c.token),
                    })
                    .collect()
            })
            .unwrap_or_default();
        records.push(TraceRecord {
            id: p.id.clone(),
            tokens: test
                .split
                .utterances
                .iter()
                .find(|u| u.id == p.id)
                .map(|u| u.tokens.clone())
                .unwrap_or_default(),
            label: p.label,
            prediction,
            position: p.detection.as_ref().map(|d| d.position),
            gate_open: p.detection.as_ref().map(|d| d.gate_mask == 1),
            sentiment_candidates_per_position: p.detection.as_ref().map(|d| d.counts.clone()),
            candidates,
            refinement: pass.trace,
        });
    }

    match &cfg.out {
        Some(out) => {
            ensure_dir(out)?;
            cfg.write_next_to_artifacts(out)?;
            let path = out.join("attention-traces.jsonl");
            write_jsonl(&path, &records)?;
            println!("wrote {} traces to {}", records.len(), path.display());
        }
        None => {
            for record in &records {
                println!("{}", serde_json::to_string(record).expect("trace serializes"));
            }
        }
    }
    Ok(())
}
