use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mosaic_core::coherence::{score, CoherenceConfig};
use mosaic_core::corpus::{load_corpus, CorpusFormat};
use mosaic_core::pipeline::{default_jobs, round_coherence, Pipeline, Stage};
use mosaic_core::report::Linkage;
use mosaic_core::synthetic::{generate, write_jsonl, SyntheticSpec};
use mosaic_core::{RunConfig, TopicModel};

#[derive(Parser, Debug)]
#[command(name = "mosaic", version, about = "Topic discovery for short free-text reports")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Local hash embedder and keyword-fallback labels; no network.
    #[arg(long, global = true)]
    offline: bool,
    /// Worker threads for the grid search (default: CPU count).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write scatter.svg.
    #[arg(long, global = true)]
    svg: bool,
    #[arg(long, global = true)]
    outlier_threshold: Option<f64>,
    /// average, complete or single.
    #[arg(long, global = true)]
    linkage: Option<Linkage>,
    /// Override the config output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// All stages in order.
    Run,
    /// Load and segment the corpus.
    Ingest,
    /// Embed every sentence.
    Embed,
    /// Grid search (or single fit), topic extraction, outlier reduction.
    Fit,
    /// Coherence of the fitted topics, or of --topics against --corpus.
    Score {
        #[arg(long, requires = "corpus")]
        topics: Option<PathBuf>,
        #[arg(long, requires = "topics")]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "jsonl")]
        format: CorpusFormat,
    },
    /// Label the fitted topics.
    Label,
    /// Table, dendrogram and scatter artifacts.
    Report,
    /// Write the seeded synthetic corpus as JSONL.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        corpus_seed: u64,
        #[arg(long, default_value_t = 100)]
        per_theme: usize,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        bail!("--config is required for this command");
    };
    let mut cfg = RunConfig::load(path).map_err(anyhow::Error::msg)?;
    if cli.offline {
        cfg.force_offline();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.svg {
        cfg.report.svg = true;
    }
    if let Some(t) = cli.outlier_threshold {
        cfg.topic.outlier_threshold = t;
    }
    if let Some(l) = cli.linkage {
        cfg.report.linkage = l;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn score_files(cli: &Cli, topics: &PathBuf, corpus: &PathBuf, format: CorpusFormat) -> Result<()> {
    let coherence = match &cli.config {
        Some(_) => load_config(cli)?.coherence,
        None => CoherenceConfig::default(),
    };
    let text = fs::read_to_string(topics).with_context(|| format!("reading {}", topics.display()))?;
    let model: TopicModel = serde_json::from_str(&text).with_context(|| format!("parsing {}", topics.display()))?;
    let (corpus, _) = load_corpus(corpus, format)?;
    let report = round_coherence(&score(&model, &corpus.sentence_texts(), &coherence));
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<i32> {
    let stage = match &cli.command {
        Command::Generate { out, corpus_seed, per_theme } => {
            let reports = generate(&SyntheticSpec {
                seed: *corpus_seed,
                sentences_per_theme: *per_theme,
                ..SyntheticSpec::default()
            });
            let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
            write_jsonl(&reports, std::io::BufWriter::new(file))?;
            return Ok(0);
        }
        Command::Score { topics: Some(t), corpus: Some(c), format } => {
            score_files(cli, t, c, *format)?;
            return Ok(0);
        }
        Command::Run => None,
        Command::Ingest => Some(Stage::Ingest),
        Command::Embed => Some(Stage::Embed),
        Command::Fit => Some(Stage::Fit),
        Command::Score { .. } => Some(Stage::Score),
        Command::Label => Some(Stage::Label),
        Command::Report => Some(Stage::Report),
    };
    let cfg = load_config(cli)?;
    let pipeline = Pipeline::new(cfg, cli.jobs.unwrap_or_else(default_jobs));
    let result = match stage {
        None => pipeline.run_all(),
        Some(s) => pipeline.run_stage(s),
    };
    match result {
        Ok(()) => Ok(0),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(e.exit_code())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
