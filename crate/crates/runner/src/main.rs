use std::path::{Path, PathBuf};
use std::process::ExitCode;

use argqual_core::corpus::{load_annotated, load_corpus, load_raw_emotion_corpus, majority_filter, LabelMaps, ManifestCheck};
use argqual_core::metrics::{aggregate_seeds, krippendorff_alpha, AgreementTable};
use argqual_core::splitting::{make_cross_topic_folds, save_plans, split_sentences, SplitRatios};
use argqual_core::DatasetManifest;
use argqual_runner::{aggregate_dir, run_experiment, ExperimentConfig, ExperimentKind, Result, RunError};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "argqual", version, about = "Argument-quality experiments: data preparation, training, transfer and emotion analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus against its manifest and write it in canonical JSONL.
    Ingest(IngestArgs),
    /// Write cross-topic fold plans, or a sentence-level split.
    Split(SplitArgs),
    /// Cross-corpus or leave-one-out quality training.
    Train(ExperimentArgs),
    /// Single-task models evaluated on every task.
    ZeroShot(ExperimentArgs),
    /// Shared-encoder multi-task training.
    Multitask(ExperimentArgs),
    /// Emotion detection models and baselines.
    EmotionDetect(ExperimentArgs),
    /// Argument quality grouped by predicted emotionality, with significance tests.
    Analyze(ExperimentArgs),
    /// Recompute mean and std from per-seed results, or from values given inline.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Built-in manifest name or path to a manifest file.
    #[arg(long)]
    manifest: String,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Source label schema of a raw emotion file.
    #[arg(long)]
    schema: Option<String>,
    /// Input holds per-annotator labels; keep only items with a strict majority.
    #[arg(long)]
    annotated: bool,
    #[arg(long, default_value_t = 6)]
    annotators: usize,
    #[arg(long)]
    strict_manifests: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RatioPreset {
    CrossCorpus,
    ZeroShot,
    Emotion,
}

impl RatioPreset {
    fn ratios(self) -> SplitRatios {
        match self {
            RatioPreset::CrossCorpus => SplitRatios::CROSS_CORPUS,
            RatioPreset::ZeroShot => SplitRatios::ZERO_SHOT,
            RatioPreset::Emotion => SplitRatios::EMOTION,
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: String,
    #[arg(long)]
    input: PathBuf,
    /// Plans file (topic folds) or output directory (--by-sentence).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "cross-corpus")]
    ratios: RatioPreset,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random sentence-level split written as train/val/test JSONL.
    #[arg(long)]
    by_sentence: bool,
    #[arg(long)]
    strict_manifests: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run only these seeds instead of the configured list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    strict_manifests: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// Experiment directory holding seed-*/cells.json.
    #[arg(long, conflicts_with = "values")]
    dir: Option<PathBuf>,
    /// Comma-separated per-seed values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

fn manifest(spec: &str) -> Result<DatasetManifest> {
    if Path::new(spec).is_file() {
        return Ok(DatasetManifest::from_file(Path::new(spec))?);
    }
    DatasetManifest::builtin(spec).ok_or_else(|| RunError::Config(format!("no manifest file or built-in manifest '{spec}'")))
}

fn check(strict: bool) -> ManifestCheck {
    if strict {
        ManifestCheck::Strict
    } else {
        ManifestCheck::Lenient
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let m = manifest(&a.manifest)?;
    let corpus = if a.annotated {
        let records = load_annotated(&a.input)?;
        let table = AgreementTable::new(records.iter().map(|r| r.annotations.clone()).collect())?;
        println!("krippendorff_alpha\t{:.4}", krippendorff_alpha(&table)?);
        let outcome = majority_filter(&records, a.annotators)?;
        println!("kept\t{}\ndropped\t{}", outcome.kept.len(), outcome.dropped.len());
        outcome.into_corpus(&m.name)?
    } else {
        let loaded = match &a.schema {
            Some(s) => load_raw_emotion_corpus(&a.input, &m, s, &LabelMaps::builtin(), check(a.strict_manifests))?,
            None => load_corpus(&a.input, &m, check(a.strict_manifests))?,
        };
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
        loaded.corpus
    };
    corpus.save_jsonl(&a.out)?;
    println!("sentences\t{}\ntopics\t{}", corpus.len(), corpus.topics().len());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let m = manifest(&a.manifest)?;
    let corpus = load_corpus(&a.input, &m, check(a.strict_manifests))?.corpus;
    if a.by_sentence {
        let s = split_sentences(&corpus, a.ratios.ratios(), a.seed)?;
        std::fs::create_dir_all(&a.out)?;
        for (name, part) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
            part.save_jsonl(&a.out.join(format!("{name}.jsonl")))?;
            println!("{name}\t{}", part.len());
        }
        return Ok(());
    }
    let plans = make_cross_topic_folds(&corpus, a.folds, a.ratios.ratios(), a.seed)?;
    save_plans(&plans, &a.out)?;
    println!("folds\t{}\ntopics\t{}", plans.len(), corpus.topics().len());
    Ok(())
}

fn experiment(a: ExperimentArgs, allowed: &[ExperimentKind]) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if !allowed.contains(&cfg.kind) {
        let names: Vec<&str> = allowed.iter().map(|k| k.as_str()).collect();
        return Err(RunError::Config(format!("config kind {} is not one of: {}", cfg.kind.as_str(), names.join(", "))));
    }
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds;
    }
    if let Some(out) = a.out {
        cfg.out_dir = out;
    }
    if a.preset.is_some() {
        cfg.preset = a.preset;
        cfg.train = None;
    }
    cfg.strict_manifests |= a.strict_manifests;
    let (dir, rows) = run_experiment(&cfg).map_err(|e| {
        if let Ok(d) = cfg.experiment_dir() {
            log::error!("artifacts so far are under {}", d.display());
        }
        e
    })?;
    for r in &rows {
        println!("{}\t{}\t{}\t{:.6}\t{:.6}", r.train_source, r.eval_target, r.metric, r.mean, r.std);
    }
    println!("results\t{}", dir.join("results.csv").display());
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    if let Some(dir) = a.dir {
        let rows = aggregate_dir(&dir)?;
        println!("rows\t{}\nresults\t{}", rows.len(), dir.join("results.csv").display());
        return Ok(());
    }
    let agg = aggregate_seeds(&a.values)?;
    println!("mean\t{}\nstd\t{}\nn\t{}", agg.mean, agg.std, agg.n);
    if agg.single_value {
        println!("note\tsingle value; std is 0 by convention");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    use ExperimentKind::*;
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Train(a) => experiment(a, &[CrossCorpus, LeaveOneOut]),
        Command::ZeroShot(a) => experiment(a, &[ZeroShot]),
        Command::Multitask(a) => experiment(a, &[MultiTask]),
        Command::EmotionDetect(a) => experiment(a, &[EmotionDetect]),
        Command::Analyze(a) => experiment(a, &[EmotionAnalysis]),
        Command::Aggregate(a) => aggregate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
