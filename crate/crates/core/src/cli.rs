//! Command-line entry points.
//!
//! Subcommands: `validate`, `export-graph`, `build-pseudo`, `pretrain`,
//! `train`, `finetune`, `generate`, `evaluate`, `ablate`. Options resolve
//! with flag > config-file > default precedence; config files are plain
//! `key=value` lines. All randomness flows from `--seed` through named
//! sub-streams, so any subcommand rerun with the same seed produces
//! identical outputs.
//!
//! Exit codes: 0 success, 1 validation error, 2 usage error (from argument
//! parsing), 3 runtime error or divergence. The `GRAPHSUM_PRECISION`
//! environment variable (`single` or `double`, default `double`) selects the
//! float width for fresh training runs; checkpoint-consuming commands follow
//! the checkpoint's recorded precision.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use crate::backend::Scalar;
use crate::corpus::{
    self, apply_split, build_vocabulary, load_meetings, parse_split_manifest, CorpusError,
    CorpusSplits, Meeting,
};
use crate::eval::{
    discourse_percentage_curve, evaluate_corpus, export_attention, percentage_curve_csv,
    relation_curve_csv, relation_type_curve, write_attention_json, EvalError,
};
use crate::graph::build_discourse_graph;
use crate::model::{
    beam_search_with, checkpoint_precision, Checkpoint, ModelConfig, ModelError, SpeakerTable,
};
use crate::pseudo::{
    build_pseudo_corpus_with, pairs_to_meetings, LexiconTagger, PseudoError, QuestionEndpoint,
    QuestionMode,
};
use crate::training::{sub_seed, train_with_checkpoints, TrainConfig, TrainError, TrainOutcome};

pub const PRECISION_ENV: &str = "GRAPHSUM_PRECISION";

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn validation(message: impl Into<String>) -> CliError {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> CliError {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> CliError {
        CliError::validation(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> CliError {
        match e {
            TrainError::Corpus(c) => c.into(),
            TrainError::MissingSummary(_) | TrainError::EmptyCorpus => {
                CliError::validation(e.to_string())
            }
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> CliError {
        CliError::runtime(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> CliError {
        match e {
            EvalError::MissingReference(_) => CliError::validation(e.to_string()),
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<PseudoError> for CliError {
    fn from(e: PseudoError) -> CliError {
        match e {
            PseudoError::Corpus(c) => c.into(),
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "graphsum",
    about = "Discourse-graph meeting summarization: data tools, training, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PseudoMode {
    Discourse,
    Rule,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EndpointArg {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AblateMode {
    Percentage,
    Relation,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

/// Options shared by the training-flavored subcommands.
#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Meeting corpus (JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split manifest with [train]/[dev]/[test] sections.
    #[arg(long)]
    pub splits: PathBuf,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Maximum global gradient norm.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub emb: Option<usize>,
    /// Graph convolution layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Vocabulary capacity (reserved tokens included).
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Optional pretrained word vectors ("word v1 ... vE" lines).
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Load and validate a corpus; print counts and a relation histogram.
    Validate {
        corpus: PathBuf,
    },
    /// Write the discourse graph of one meeting as debug JSON.
    ExportGraph {
        corpus: PathBuf,
        /// Meeting to export; defaults to the first one.
        #[arg(long)]
        meeting: Option<String>,
        /// Output file; "-" for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Build a pseudo-summarization corpus from question discourse.
    BuildPseudo {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Utterances after the question forming the pseudo input.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, value_enum, default_value_t = PseudoMode::Discourse)]
        mode: PseudoMode,
        /// Which endpoint of a question-answer edge is the question.
        #[arg(long, value_enum, default_value_t = EndpointArg::Source)]
        question_endpoint: EndpointArg,
    },
    /// Train from scratch on a corpus.
    Train {
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Pre-train on a pseudo corpus; vocabulary comes from the real corpus.
    Pretrain {
        #[command(flatten)]
        args: TrainArgs,
        /// Pseudo corpus (JSONL with summaries) to train on.
        #[arg(long)]
        pseudo_corpus: PathBuf,
        /// Fraction of pseudo pairs held out as the convergence dev set.
        #[arg(long, default_value_t = 0.1)]
        pseudo_dev_fraction: f64,
    },
    /// Continue training from an existing checkpoint.
    Finetune {
        #[command(flatten)]
        args: TrainArgs,
        /// Initial checkpoint to fine-tune.
        #[arg(long)]
        init: PathBuf,
    },
    /// Decode summaries for a split.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long, default_value_t = 25)]
        max_len: usize,
        /// Also write per-meeting attention traces into the output directory.
        #[arg(long)]
        export_attention: bool,
    },
    /// ROUGE-score a split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long, default_value_t = 25)]
        max_len: usize,
    },
    /// Discourse ablations: relation-percentage or per-relation curves.
    Ablate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        #[arg(long, value_enum)]
        mode: AblateMode,
        /// Comma-separated fractions for percentage mode.
        #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1")]
        fractions: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long, default_value_t = 25)]
        max_len: usize,
        /// CSV output file; "-" for stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(CliError::validation(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

/// `key=value` lines with '#' comments.
fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::validation(format!(
                "config {}: line {}: expected key=value",
                path.display(),
                i + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Resolver {
    file: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&PathBuf>) -> Result<Resolver> {
        let file = match config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        Ok(Resolver { file })
    }

    fn get<T: std::str::FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::validation(format!("config key {key}: bad value {raw:?}"))),
            None => Ok(default),
        }
    }
}

/// Resolved training options.
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

fn resolve_configs(args: &TrainArgs) -> Result<RunConfig> {
    let r = Resolver::new(args.config.as_ref())?;
    let train_defaults = TrainConfig::default();
    let model_defaults = ModelConfig::default();
    let train = TrainConfig {
        learning_rate: r.get("learning_rate", args.learning_rate, train_defaults.learning_rate)?,
        max_grad_norm: r.get("max_grad_norm", args.clip, train_defaults.max_grad_norm)?,
        dropout: r.get("dropout", args.dropout, train_defaults.dropout)?,
        batch_size: r.get("batch_size", args.batch_size, train_defaults.batch_size)?,
        max_epochs: r.get("max_epochs", args.epochs, train_defaults.max_epochs)?,
        patience: r.get("patience", args.patience, train_defaults.patience)?,
        rng_seed: r.get("seed", args.seed, train_defaults.rng_seed)?,
    };
    let model = ModelConfig {
        hidden_size: r.get("hidden_size", args.hidden, model_defaults.hidden_size)?,
        word_emb_size: r.get("word_emb_size", args.emb, model_defaults.word_emb_size)?,
        num_gcn_layers: r.get("num_gcn_layers", args.layers, model_defaults.num_gcn_layers)?,
        dropout: train.dropout,
        vocab_size: r.get("vocab_size", args.vocab_size, model_defaults.vocab_size)?,
        num_speakers: model_defaults.num_speakers,
        beam_size: r.get("beam_size", args.beam, model_defaults.beam_size)?,
    };
    model.validate().map_err(|e| CliError::validation(e.to_string()))?;
    Ok(RunConfig { train, model })
}

fn load_splits(corpus: &Path, manifest: &Path) -> Result<CorpusSplits> {
    require_file(corpus, "corpus")?;
    require_file(manifest, "split manifest")?;
    let meetings = load_meetings(corpus)?;
    let manifest = parse_split_manifest(manifest)?;
    Ok(apply_split(&meetings, &manifest)?)
}

fn select_split(
    corpus: &Path,
    manifest: Option<&PathBuf>,
    which: SplitName,
) -> Result<Vec<Meeting>> {
    require_file(corpus, "corpus")?;
    let meetings = load_meetings(corpus)?;
    match manifest {
        None => Ok(meetings),
        Some(path) => {
            require_file(path, "split manifest")?;
            let manifest = parse_split_manifest(path)?;
            let splits = apply_split(&meetings, &manifest)?;
            Ok(match which {
                SplitName::Train => splits.train,
                SplitName::Dev => splits.dev,
                SplitName::Test => splits.test,
            })
        }
    }
}

fn precision_from_env() -> Result<String> {
    match std::env::var(PRECISION_ENV) {
        Ok(v) if v == "single" => Ok("f32".into()),
        Ok(v) if v == "double" => Ok("f64".into()),
        Ok(other) => Err(CliError::usage(format!(
            "{PRECISION_ENV} must be \"single\" or \"double\", got {other:?}"
        ))),
        Err(_) => Ok("f64".into()),
    }
}

fn write_out(target: &str, content: &str) -> Result<()> {
    if target == "-" {
        print!("{content}");
        Ok(())
    } else {
        fs::write(target, content)?;
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { corpus } => validate(&corpus),
        Command::ExportGraph {
            corpus,
            meeting,
            out,
        } => export_graph(&corpus, meeting.as_deref(), &out),
        Command::BuildPseudo {
            corpus,
            out,
            n,
            mode,
            question_endpoint,
        } => build_pseudo(&corpus, &out, n, mode, question_endpoint),
        Command::Train { args } => dispatch_train(&args, None, None),
        Command::Pretrain {
            args,
            pseudo_corpus,
            pseudo_dev_fraction,
        } => dispatch_pretrain(&args, &pseudo_corpus, pseudo_dev_fraction),
        Command::Finetune { args, init } => {
            require_file(&init, "initial checkpoint")?;
            dispatch_train(&args, Some(init), None)
        }
        Command::Generate {
            ckpt,
            corpus,
            splits,
            split,
            out,
            beam,
            max_len,
            export_attention,
        } => dispatch_generate(
            &ckpt,
            &corpus,
            splits.as_ref(),
            split,
            &out,
            beam,
            max_len,
            export_attention,
        ),
        Command::Evaluate {
            ckpt,
            corpus,
            splits,
            split,
            beam,
            max_len,
        } => dispatch_evaluate(&ckpt, &corpus, splits.as_ref(), split, beam, max_len),
        Command::Ablate {
            ckpt,
            corpus,
            splits,
            split,
            mode,
            fractions,
            seed,
            beam,
            max_len,
            out,
        } => dispatch_ablate(
            &ckpt,
            &corpus,
            splits.as_ref(),
            split,
            mode,
            &fractions,
            seed,
            beam,
            max_len,
            &out,
        ),
    }
}

fn validate(corpus: &Path) -> Result<()> {
    require_file(corpus, "corpus")?;
    let meetings = load_meetings(corpus)?;
    if meetings.is_empty() {
        return Err(CliError::validation("corpus contains no meetings"));
    }
    let utterances: usize = meetings.iter().map(|m| m.utterances.len()).sum();
    let relations: usize = meetings.iter().map(|m| m.relations.len()).sum();
    let with_summary = meetings
        .iter()
        .filter(|m| m.reference_summary.is_some())
        .count();
    println!("meetings {}", meetings.len());
    println!("utterances {utterances}");
    println!("relations {relations}");
    println!("with_summary {with_summary}");
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for m in &meetings {
        for r in &m.relations {
            *histogram.entry(r.relation.index()).or_insert(0) += 1;
        }
    }
    for relation in corpus::DiscourseRelationType::ALL {
        let count = histogram.get(&relation.index()).copied().unwrap_or(0);
        println!("relation {relation} {count}");
    }
    Ok(())
}

fn export_graph(corpus: &Path, meeting_id: Option<&str>, out: &str) -> Result<()> {
    require_file(corpus, "corpus")?;
    let meetings = load_meetings(corpus)?;
    let meeting = match meeting_id {
        Some(id) => meetings
            .iter()
            .find(|m| m.meeting_id == id)
            .ok_or_else(|| CliError::validation(format!("no meeting with id {id:?}")))?,
        None => meetings
            .first()
            .ok_or_else(|| CliError::validation("corpus contains no meetings"))?,
    };
    let graph = build_discourse_graph(meeting);
    let json = serde_json::to_string_pretty(&graph.to_debug_json()).expect("graph serializes");
    write_out(out, &format!("{json}\n"))
}

fn build_pseudo(
    corpus: &Path,
    out: &Path,
    n: usize,
    mode: PseudoMode,
    endpoint: EndpointArg,
) -> Result<()> {
    require_file(corpus, "corpus")?;
    let meetings = load_meetings(corpus)?;
    let mode = match mode {
        PseudoMode::Discourse => QuestionMode::Discourse,
        PseudoMode::Rule => QuestionMode::Rule,
    };
    let endpoint = match endpoint {
        EndpointArg::Source => QuestionEndpoint::Source,
        EndpointArg::Target => QuestionEndpoint::Target,
    };
    let tagger = LexiconTagger::default();
    let (pairs, stats) = build_pseudo_corpus_with(&meetings, n, &tagger, mode, endpoint)?;
    corpus::save_meetings(out, &pairs_to_meetings(&pairs))?;
    println!("questions {}", stats.questions_found);
    println!("rejected_by_filter {}", stats.rejected_by_filter);
    println!("empty_window {}", stats.empty_window);
    println!("pairs {}", stats.pairs);
    Ok(())
}

fn dispatch_train(
    args: &TrainArgs,
    init: Option<PathBuf>,
    pseudo: Option<(&Path, f64)>,
) -> Result<()> {
    match init {
        Some(path) => match checkpoint_precision(&path)?.as_str() {
            "f32" => run_train::<f32>(args, Some(&path), pseudo),
            "f64" => run_train::<f64>(args, Some(&path), pseudo),
            other => Err(CliError::runtime(format!(
                "unsupported checkpoint precision {other:?}"
            ))),
        },
        None => match precision_from_env()?.as_str() {
            "f32" => run_train::<f32>(args, None, pseudo),
            _ => run_train::<f64>(args, None, pseudo),
        },
    }
}

fn dispatch_pretrain(args: &TrainArgs, pseudo_corpus: &Path, dev_fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&dev_fraction) {
        return Err(CliError::usage("pseudo dev fraction must lie in [0, 1)"));
    }
    match precision_from_env()?.as_str() {
        "f32" => run_train::<f32>(args, None, Some((pseudo_corpus, dev_fraction))),
        _ => run_train::<f64>(args, None, Some((pseudo_corpus, dev_fraction))),
    }
}

/// Deterministic index-based holdout: every k-th pair goes to dev.
fn split_pseudo(meetings: Vec<Meeting>, dev_fraction: f64) -> CorpusSplits {
    if dev_fraction <= 0.0 || meetings.len() < 2 {
        return CorpusSplits {
            train: meetings,
            ..CorpusSplits::default()
        };
    }
    let period = (1.0 / dev_fraction).round().max(2.0) as usize;
    let mut splits = CorpusSplits::default();
    for (i, m) in meetings.into_iter().enumerate() {
        if (i + 1) % period == 0 {
            splits.dev.push(m);
        } else {
            splits.train.push(m);
        }
    }
    splits
}

fn run_train<S: Scalar>(
    args: &TrainArgs,
    init: Option<&Path>,
    pseudo: Option<(&Path, f64)>,
) -> Result<()> {
    let run = resolve_configs(args)?;
    let real_splits = load_splits(&args.corpus, &args.splits)?;
    if let Some(v) = &args.vectors {
        require_file(v, "word vector file")?;
    }
    fs::create_dir_all(&args.out)?;

    // Training corpus: either the real train split or a held-out pseudo
    // corpus; vocabulary and speakers always come from the real train split.
    let train_splits = match pseudo {
        None => real_splits.clone(),
        Some((path, dev_fraction)) => {
            require_file(path, "pseudo corpus")?;
            let pairs = load_meetings(path)?;
            split_pseudo(pairs, dev_fraction)
        }
    };

    let initial: Option<Checkpoint<S>> = match init {
        Some(path) => Some(Checkpoint::load(path)?),
        None => {
            // Build here (rather than inside `train`) so the vocabulary is
            // anchored to the real corpus and pretrained vectors can load.
            let vocab = build_vocabulary(&real_splits.train, run.model.vocab_size)?;
            let speakers = SpeakerTable::from_meetings(&real_splits.train);
            let mut config = run.model.clone();
            config.dropout = run.train.dropout;
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(sub_seed(run.train.rng_seed, "init"));
            let mut ckpt: Checkpoint<S> = Checkpoint::fresh(config, vocab, speakers, &mut rng)?;
            if let Some(vectors) = &args.vectors {
                let loaded = ckpt.params.load_pretrained_words(&ckpt.vocab, vectors)?;
                println!("pretrained_vectors {loaded}");
            }
            Some(ckpt)
        }
    };

    let mut log = Vec::new();
    let outcome: TrainOutcome<S> = train_with_checkpoints(
        &train_splits,
        &run.train,
        &run.model,
        initial,
        &mut log,
        Some(&args.out),
    )?;
    let log_text = String::from_utf8(log).expect("log is utf-8");
    print!("{log_text}");
    fs::write(args.out.join("train.log"), &log_text)?;
    let ckpt_path = args.out.join("checkpoint_best.json");
    outcome.best.save(&ckpt_path)?;
    println!(
        "best_epoch {} best_dev_loss {:.6}",
        outcome.best_epoch, outcome.best_dev_loss
    );
    println!("checkpoint {}", ckpt_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn dispatch_generate(
    ckpt: &Path,
    corpus: &Path,
    splits: Option<&PathBuf>,
    split: SplitName,
    out: &Path,
    beam: Option<usize>,
    max_len: usize,
    attention: bool,
) -> Result<()> {
    require_file(ckpt, "checkpoint")?;
    match checkpoint_precision(ckpt)?.as_str() {
        "f32" => generate_impl::<f32>(ckpt, corpus, splits, split, out, beam, max_len, attention),
        "f64" => generate_impl::<f64>(ckpt, corpus, splits, split, out, beam, max_len, attention),
        other => Err(CliError::runtime(format!(
            "unsupported checkpoint precision {other:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn generate_impl<S: Scalar>(
    ckpt_path: &Path,
    corpus: &Path,
    splits: Option<&PathBuf>,
    split: SplitName,
    out: &Path,
    beam: Option<usize>,
    max_len: usize,
    attention: bool,
) -> Result<()> {
    let ckpt: Checkpoint<S> = Checkpoint::load(ckpt_path)?;
    let meetings = select_split(corpus, splits, split)?;
    let beam = beam.unwrap_or(ckpt.config.beam_size);
    fs::create_dir_all(out)?;
    let mut lines = String::new();
    for meeting in &meetings {
        let hyp = beam_search_with(&ckpt, meeting, beam, max_len)?;
        writeln!(lines, "{}\t{}", meeting.meeting_id, hyp.tokens.join(" "))
            .expect("write to string");
        if attention {
            let trace = export_attention(&ckpt, meeting, max_len)?;
            let path = out.join(format!("attention_{}.json", meeting.meeting_id));
            write_attention_json(&trace, path)?;
        }
    }
    let path = out.join("summaries.txt");
    fs::write(&path, &lines)?;
    print!("{lines}");
    println!("written {}", path.display());
    Ok(())
}

fn dispatch_evaluate(
    ckpt: &Path,
    corpus: &Path,
    splits: Option<&PathBuf>,
    split: SplitName,
    beam: Option<usize>,
    max_len: usize,
) -> Result<()> {
    require_file(ckpt, "checkpoint")?;
    match checkpoint_precision(ckpt)?.as_str() {
        "f32" => evaluate_impl::<f32>(ckpt, corpus, splits, split, beam, max_len),
        "f64" => evaluate_impl::<f64>(ckpt, corpus, splits, split, beam, max_len),
        other => Err(CliError::runtime(format!(
            "unsupported checkpoint precision {other:?}"
        ))),
    }
}

fn evaluate_impl<S: Scalar>(
    ckpt_path: &Path,
    corpus: &Path,
    splits: Option<&PathBuf>,
    split: SplitName,
    beam: Option<usize>,
    max_len: usize,
) -> Result<()> {
    let ckpt: Checkpoint<S> = Checkpoint::load(ckpt_path)?;
    let meetings = select_split(corpus, splits, split)?;
    let beam = beam.unwrap_or(ckpt.config.beam_size);
    let eval = evaluate_corpus(&ckpt, &meetings, beam, max_len)?;
    for m in &eval.per_meeting {
        println!(
            "meeting {} r1 {:.4} r2 {:.4} rl {:.4}",
            m.meeting_id, m.scores.rouge_1.f1, m.scores.rouge_2.f1, m.scores.rouge_l.f1
        );
    }
    println!("rouge_1_f1 {:.4}", eval.mean.rouge_1.f1);
    println!("rouge_2_f1 {:.4}", eval.mean.rouge_2.f1);
    println!("rouge_l_f1 {:.4}", eval.mean.rouge_l.f1);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn dispatch_ablate(
    ckpt: &Path,
    corpus: &Path,
    splits: Option<&PathBuf>,
    split: SplitName,
    mode: AblateMode,
    fractions: &str,
    seed: u64,
    beam: Option<usize>,
    max_len: usize,
    out: &str,
) -> Result<()> {
    require_file(ckpt, "checkpoint")?;
    match checkpoint_precision(ckpt)?.as_str() {
        "f32" => ablate_impl::<f32>(
            ckpt, corpus, splits, split, mode, fractions, seed, beam, max_len, out,
        ),
        "f64" => ablate_impl::<f64>(
            ckpt, corpus, splits, split, mode, fractions, seed, beam, max_len, out,
        ),
        other => Err(CliError::runtime(format!(
            "unsupported checkpoint precision {other:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn ablate_impl<S: Scalar>(
    ckpt_path: &Path,
    corpus: &Path,
    splits: Option<&PathBuf>,
    split: SplitName,
    mode: AblateMode,
    fractions: &str,
    seed: u64,
    beam: Option<usize>,
    max_len: usize,
    out: &str,
) -> Result<()> {
    let ckpt: Checkpoint<S> = Checkpoint::load(ckpt_path)?;
    let meetings = select_split(corpus, splits, split)?;
    let beam = beam.unwrap_or(ckpt.config.beam_size);
    let csv = match mode {
        AblateMode::Percentage => {
            let fractions: std::result::Result<Vec<f64>, _> =
                fractions.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fractions = fractions
                .map_err(|e| CliError::usage(format!("bad --fractions value: {e}")))?;
            if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(CliError::usage("fractions must lie in [0, 1]"));
            }
            let rows =
                discourse_percentage_curve(&ckpt, &meetings, &fractions, seed, beam, max_len)?;
            percentage_curve_csv(&rows)
        }
        AblateMode::Relation => {
            let rows = relation_type_curve(&ckpt, &meetings, beam, max_len)?;
            relation_curve_csv(&rows)
        }
    };
    write_out(out, &csv)?;
    if out != "-" {
        println!("written {out}");
    }
    Ok(())
}
