//! Batch command-line surface: `fslhate <train|eval|ablate|augment|gen-synthetic>`.
//!
//! Exit codes: 0 success, 2 usage/config/IO/format problems, 3 numerical failure,
//! 4 artifact mismatch (checkpoint corrupt or paired with the wrong vocabulary).

pub mod checkpoint;
pub mod config;
pub mod pipeline;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::augment::{augment_text, AugmentStats, SynonymLexicon};
use crate::data::{self, gen_synthetic, gen_synthetic_shifted, DatasetFormat, RawExample};
use crate::error::{Error, Result};
use crate::evalkit::{ablation_table_with, aggregate_seeds, AblationVariant, MetricsReport};
use crate::numerics::Rng;
use crate::textpipe::Vocabulary;
use crate::train::TrainExample;

use checkpoint::Checkpoint;
pub use config::RunConfig;
use pipeline::{evaluate, prepare, run_seed, Experiment};

fn load_lexicon(path: &Path) -> Result<SynonymLexicon> {
    let lexicon = crate::augment::load_lexicon(path)?;
    if lexicon.skipped_lines() > 0 {
        eprintln!(
            "warning: {}: skipped {} line(s) without synonyms",
            path.display(),
            lexicon.skipped_lines()
        );
    }
    Ok(lexicon)
}

pub const FAILED_MARKER: &str = "FAILED";
pub const THREADS_ENV: &str = "FSLHATE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fslhate", version, about = "Few-shot hate speech classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and score it on the held-out split.
    Train(RunArgs),
    /// Score a checkpoint on a dataset or on the config's test split.
    Eval(EvalArgs),
    /// Train every ablation variant with shared seeds and splits.
    Ablate(RunArgs),
    /// Apply synonym replacement to a `label<TAB>text` corpus.
    Augment(AugmentArgs),
    /// Write a synthetic corpus, its lexical-shift test set and lexicon.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "dataset-format")]
    pub dataset_format: Option<String>,
    /// Ablation variant (train: the variant to train; ablate: compare only this one to full).
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Without `--input`, the config's dataset is split and its test part scored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Score every example of this file instead.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long = "dataset-format")]
    pub dataset_format: Option<String>,
    /// Directory for the metrics files (default: the checkpoint's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output corpus path.
    #[arg(long)]
    pub out: PathBuf,
    /// Lexicon TSV; the bundled lexicon when omitted.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Replacement probability (default: the config's `augment_p`, else 0.1).
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional run config supplying `lexicon` and `augment_p` defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "n-per-class", default_value_t = 64)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Examples per class in the shifted test set (default: `n-per-class`).
    #[arg(long = "shifted-per-class")]
    pub shifted_per_class: Option<usize>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericalFailure(_) => 3,
        Error::ArtifactMismatch(_) | Error::InvalidState(_) => 4,
        Error::InvalidArgument(_) | Error::Format(_) | Error::Config(_) | Error::Io { .. } => 2,
    }
}

/// Writes through a sibling temporary file and a rename, so readers never see a
/// partially written artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Thread count from `FSLHATE_THREADS` (default: all logical CPUs).
pub fn configured_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = configured_threads().and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))
    });
    let result = pool.and_then(|pool| pool.install(|| run(cli.command)));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fslhate: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Ablate(args) => cmd_ablate(&args),
        Command::Augment(args) => cmd_augment(&args),
        Command::GenSynthetic(args) => cmd_gen_synthetic(&args),
    }
}

/// Config with command-line overrides applied, validated, plus the loaded data.
struct Session {
    config: RunConfig,
    examples: Vec<RawExample>,
    lexicon: SynonymLexicon,
}

fn open_session(args: &RunArgs) -> Result<Session> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.train.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(format) = &args.dataset_format {
        config.dataset_format = format.parse()?;
    }
    if let Some(v) = &args.variant {
        config.variant = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    }
    config.validate()?;
    let path = config.dataset_path.clone().expect("validated");
    let loaded = data::load(config.dataset_format, &path)?;
    if loaded.examples.is_empty() {
        return Err(Error::InvalidArgument(format!("dataset {} is empty", path.display())));
    }
    let lexicon = match &config.lexicon {
        Some(p) => load_lexicon(p)?,
        None => SynonymLexicon::bundled(),
    };
    Ok(Session {
        config,
        examples: loaded.examples,
        lexicon,
    })
}

/// Runs `body` against a fresh run directory; on failure leaves a `FAILED` marker.
fn in_run_dir(dir: &Path, body: impl FnOnce() -> Result<()>) -> Result<()> {
    create_dir(dir)?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let result = body();
    if let Err(e) = &result {
        let _ = fs::write(&marker, format!("{e}\n"));
    }
    result
}

fn write_report(dir: &Path, stem: &str, report: &MetricsReport) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.txt")), report.to_kv().as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.json")), report.to_json().as_bytes())
}

/// All seeds of one configuration into `dir`; returns the aggregated report.
fn train_seeds(session: &Session, config: &RunConfig, dir: &Path) -> Result<MetricsReport> {
    create_dir(dir)?;
    write_atomic(&dir.join("config.txt"), config.to_text().as_bytes())?;
    let mut reports = Vec::new();
    for &seed in &config.train.seeds {
        let prepared = prepare(&session.examples, &config.split, config.few_shot_k, seed)?;
        let seed_dir = dir.join(format!("seed{seed}"));
        create_dir(&seed_dir)?;
        let experiment = Experiment {
            train: &prepared.train,
            test: &prepared.test,
            lexicon: &session.lexicon,
            model: &config.model,
            training: &config.train,
            max_vocab: config.max_vocab,
        };
        let header = format!("variant={}", config.variant);
        println!("{header}");
        let run = run_seed(&experiment, seed, |line| println!("{line}"))?;
        let mut log = header;
        log.push('\n');
        for line in &run.log {
            log.push_str(line);
            log.push('\n');
        }
        let ckpt = Checkpoint {
            config: config.model.clone(),
            vocab_hash: run.vocab.hash(),
            params: run.params,
        };
        write_atomic(&seed_dir.join("vocab.txt"), run.vocab.to_text().as_bytes())?;
        ckpt.save(&seed_dir.join("model.ckpt"))?;
        write_atomic(&seed_dir.join("train.log"), log.as_bytes())?;
        write_report(dir, &format!("metrics_seed{seed}"), &run.report)?;
        reports.push(run.report);
    }
    let mean = aggregate_seeds(&reports)?;
    write_report(dir, "metrics_mean", &mean)?;
    println!("{mean}");
    Ok(mean)
}

pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let session = open_session(args)?;
    let config = session.config.for_variant(session.config.variant);
    let dir = config.out.clone();
    in_run_dir(&dir, || train_seeds(&session, &config, &dir).map(|_| ()))
}

pub fn cmd_ablate(args: &RunArgs) -> Result<()> {
    let session = open_session(args)?;
    let variants: Vec<AblationVariant> = match (&args.variant, session.config.variant) {
        (Some(_), v) if v != AblationVariant::Full => vec![AblationVariant::Full, v],
        _ => AblationVariant::ALL.to_vec(),
    };
    let dir = session.config.out.clone();
    in_run_dir(&dir, || {
        let mut results = BTreeMap::new();
        for variant in variants {
            let config = session.config.for_variant(variant);
            let report = train_seeds(&session, &config, &dir.join(variant.name()))?;
            results.insert(variant, report);
        }
        let table = ablation_table_with(&results, session.config.average)?;
        write_atomic(&dir.join("ablation_table.txt"), table.as_bytes())?;
        print!("{table}");
        Ok(())
    })
}

fn load_examples(format: Option<&str>, path: &Path) -> Result<Vec<RawExample>> {
    let format: DatasetFormat = format.unwrap_or("tsv").parse()?;
    Ok(data::load(format, path)?.examples)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let ckpt_dir = args.checkpoint.parent().unwrap_or_else(|| Path::new("."));
    let vocab = Vocabulary::load(&ckpt_dir.join("vocab.txt"))?;
    if vocab.hash() != ckpt.vocab_hash {
        return Err(Error::ArtifactMismatch(format!(
            "vocabulary hash {} does not match the checkpoint's {}",
            vocab.hash(),
            ckpt.vocab_hash
        )));
    }
    if vocab.len() != ckpt.params.vocab_size() {
        return Err(Error::ArtifactMismatch("vocabulary size differs from the embedding".into()));
    }
    let examples: Vec<TrainExample> = match (&args.input, &args.config) {
        (Some(input), _) => load_examples(args.dataset_format.as_deref(), input)?
            .iter()
            .map(RawExample::to_train)
            .collect(),
        (None, Some(config_path)) => {
            let mut config = RunConfig::load(config_path)?;
            if let Some(format) = &args.dataset_format {
                config.dataset_format = format.parse()?;
            }
            config.validate()?;
            let path = config.dataset_path.clone().expect("validated");
            let raw = data::load(config.dataset_format, &path)?.examples;
            if raw.is_empty() {
                return Err(Error::InvalidArgument(format!("dataset {} is empty", path.display())));
            }
            prepare(&raw, &config.split, 0, 0)?.test
        }
        (None, None) => {
            return Err(Error::Config("eval needs --input or --config".into()));
        }
    };
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no examples to evaluate".into()));
    }
    let report = evaluate(&ckpt.params, &ckpt.config, &vocab, &examples)?;
    let out = args.out.clone().unwrap_or_else(|| ckpt_dir.to_path_buf());
    create_dir(&out)?;
    write_report(&out, "eval_metrics", &report)?;
    println!("{report}");
    Ok(())
}

/// Rewrites each `label<TAB>text` line with the text augmented in place; every other
/// byte (labels, separators, line endings, blank lines) is preserved.
pub fn augment_corpus(
    corpus: &str,
    lexicon: &SynonymLexicon,
    p: f64,
    seed: u64,
) -> Result<(String, AugmentStats)> {
    let mut out = String::with_capacity(corpus.len());
    let mut stats = AugmentStats::default();
    for (i, line) in corpus.split_inclusive('\n').enumerate() {
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            out.push_str(line);
            continue;
        }
        let (label, text) = body
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("line {}: expected label<TAB>text", i + 1)))?;
        let mut rng = Rng::derive(seed, &[i as u64]);
        let (augmented, s) = augment_text(text, lexicon, p, &mut rng);
        stats.merge(s);
        out.push_str(label);
        out.push('\t');
        out.push_str(&augmented);
        out.push_str(&line[body.len()..]);
    }
    Ok((out, stats))
}

pub fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    let config = args.config.as_deref().map(RunConfig::load).transpose()?;
    let lexicon_path = args
        .lexicon
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.lexicon.clone()));
    let lexicon = match &lexicon_path {
        Some(p) => load_lexicon(p)?,
        None => SynonymLexicon::bundled(),
    };
    let p = args
        .p
        .or_else(|| config.as_ref().map(|c| c.train.augment_p))
        .unwrap_or(0.1);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("--p must lie in [0, 1], got {p}")));
    }
    let bytes = fs::read(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let corpus = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{} is not valid UTF-8", args.input.display())))?;
    data::parse_tsv(&corpus)?;
    let (augmented, stats) = augment_corpus(&corpus, &lexicon, p, args.seed)?;
    write_atomic(&args.out, augmented.as_bytes())?;
    let audit = format!(
        "augment covered={} replaced={} rate={} p={} seed={}",
        stats.covered,
        stats.replaced,
        stats.rate(),
        p,
        args.seed
    );
    let mut audit_path = args.out.as_os_str().to_owned();
    audit_path.push(".audit");
    write_atomic(Path::new(&audit_path), format!("{audit}\n").as_bytes())?;
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "{audit}");
    Ok(())
}

pub fn cmd_gen_synthetic(args: &GenArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(Error::Config(format!("--noise must lie in [0, 1], got {}", args.noise)));
    }
    create_dir(&args.out)?;
    let (corpus, lexicon) = gen_synthetic(args.n_per_class, args.noise, args.seed);
    let shifted = gen_synthetic_shifted(
        args.shifted_per_class.unwrap_or(args.n_per_class),
        args.noise,
        args.seed,
    );
    write_atomic(&args.out.join("corpus.tsv"), data::to_tsv(&corpus).as_bytes())?;
    write_atomic(&args.out.join("shifted.tsv"), data::to_tsv(&shifted).as_bytes())?;
    write_atomic(&args.out.join("lexicon.tsv"), lexicon.to_tsv().as_bytes())?;
    println!(
        "wrote {} examples, {} shifted examples and {} lexicon entries to {}",
        corpus.len(),
        shifted.len(),
        lexicon.len(),
        args.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augment_corpus_preserves_layout() {
        let corpus = "normal\tHello  there, friend!\r\n\noffensive\tyou fool\n";
        let mut lexicon = SynonymLexicon::new();
        lexicon.insert("friend", &["pal"]);
        lexicon.insert("fool", &["idiot"]);
        let (same, stats) = augment_corpus(corpus, &lexicon, 0.0, 1).unwrap();
        assert_eq!(same, corpus);
        assert_eq!(stats.covered, 2);
        let (all, stats) = augment_corpus(corpus, &lexicon, 1.0, 1).unwrap();
        assert_eq!(all, "normal\tHello  there, pal!\r\n\noffensive\tyou idiot\n");
        assert_eq!(stats.replaced, 2);
        assert!(augment_corpus("no tab here\n", &lexicon, 0.5, 0).is_err());
    }

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 2);
        assert_eq!(exit_code(&Error::NumericalFailure("x".into())), 3);
        assert_eq!(exit_code(&Error::ArtifactMismatch("x".into())), 4);
    }
}
