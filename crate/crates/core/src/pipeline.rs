//! Stage runner. Every stage reads its inputs from the output directory
//! and writes its own artifacts there, so a full run is just the stages in
//! sequence.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coherence::{score as score_model, CoherenceReport};
use crate::config::RunConfig;
use crate::corpus::{load_corpus, Corpus, CorpusError, LoadSummary};
use crate::embedder::{embed, EmbedError, EmbeddingMatrix};
use crate::format::{fmt_p, round_sig};
use crate::labeler::{label_all, ChatClient, HttpChatClient};
use crate::report::{scatter_2d, topic_dendrogram, topic_table, ReportError};
use crate::search::{derive_seed, run_grid, FitContext, GridPoint, SearchError};
use crate::topics::TopicModel;

pub const CORPUS_JSON: &str = "corpus.json";
pub const EMBEDDINGS_JSON: &str = "embeddings.json";
pub const FIT_JSON: &str = "fit.json";
pub const TOPICS_JSON: &str = "topics.json";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const GRID_CSV: &str = "grid.csv";
pub const COHERENCE_JSON: &str = "coherence.json";
pub const TABLE_CSV: &str = "table.csv";
pub const DENDROGRAM_JSON: &str = "dendrogram.json";
pub const SCATTER_CSV: &str = "scatter.csv";
pub const SCATTER_SVG: &str = "scatter.svg";
pub const MANIFEST_JSON: &str = "run_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Embed,
    Fit,
    Score,
    Label,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Ingest, Stage::Embed, Stage::Fit, Stage::Score, Stage::Label, Stage::Report];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Fit => "fit",
            Stage::Score => "score",
            Stage::Label => "label",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing artifact {name} at {path} (run the `{producer}` stage first)")]
    MissingArtifact { name: &'static str, producer: Stage, path: PathBuf },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("all {0} grid combinations were rejected; see grid.csv")]
    AllRejected(usize),
    #[error("{0}")]
    Fit(String),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::AllRejected(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Error)]
#[error("stage {stage}: {error}")]
pub struct StageError {
    pub stage: Stage,
    pub error: PipelineError,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusArtifact {
    pub summary: LoadSummary,
    pub corpus: Corpus,
}

/// Winning configuration of the fit stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub best: GridPoint,
    pub reducer_seed: u64,
    pub grid_size: usize,
    pub accepted: usize,
    pub n_topics: usize,
    pub raw_noise: usize,
    pub cv: f64,
    pub umass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub ok: bool,
    pub millis: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestError {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub jobs: usize,
    pub config: RunConfig,
    pub provider_tag: Option<String>,
    pub best: Option<GridPoint>,
    pub stages: Vec<StageRecord>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<ManifestError>,
}

#[derive(Debug, Default)]
struct StageNote {
    provider_tag: Option<String>,
    best: Option<GridPoint>,
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub jobs: usize,
}

fn io_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| io_err(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| io_err(path, e))
}

/// Copy of the model with artifact precision: 6 significant digits,
/// probabilities 4.
pub fn round_model(model: &TopicModel) -> TopicModel {
    let mut m = model.clone();
    for row in m.ctfidf.iter_mut() {
        for x in row.iter_mut() {
            *x = round_sig(*x, 6);
        }
    }
    for t in m.topics.iter_mut() {
        for k in t.keywords.iter_mut() {
            k.weight = round_sig(k.weight, 6);
        }
    }
    for p in m.assignment.probabilities.iter_mut() {
        *p = round_sig(*p, 4);
    }
    m
}

pub fn round_coherence(r: &CoherenceReport) -> CoherenceReport {
    let r6 = |x: f64| round_sig(x, 6);
    CoherenceReport {
        cv: r6(r.cv),
        cv_raw: r6(r.cv_raw),
        umass: r6(r.umass),
        per_topic_cv: r.per_topic_cv.iter().map(|x| x.map(r6)).collect(),
        per_topic_umass: r.per_topic_umass.iter().map(|x| x.map(r6)).collect(),
        ..r.clone()
    }
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl Pipeline {
    pub fn new(cfg: RunConfig, jobs: usize) -> Self {
        Self { cfg, jobs: jobs.max(1) }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn input<T: DeserializeOwned>(&self, name: &'static str, producer: Stage) -> Result<T, PipelineError> {
        let path = self.out(name);
        if !path.exists() {
            return Err(PipelineError::MissingArtifact { name, producer, path });
        }
        read_json(&path)
    }

    pub fn load_corpus_artifact(&self) -> Result<CorpusArtifact, PipelineError> {
        self.input(CORPUS_JSON, Stage::Ingest)
    }

    pub fn load_embeddings(&self) -> Result<EmbeddingMatrix, PipelineError> {
        self.input(EMBEDDINGS_JSON, Stage::Embed)
    }

    pub fn load_topics(&self) -> Result<TopicModel, PipelineError> {
        self.input(TOPICS_JSON, Stage::Fit)
    }

    pub fn load_fit(&self) -> Result<FitRecord, PipelineError> {
        self.input(FIT_JSON, Stage::Fit)
    }

    /// Runs one stage and records it in the manifest, whether it succeeds
    /// or not.
    pub fn run_stage(&self, stage: Stage) -> Result<(), StageError> {
        let start = Instant::now();
        let result = fs::create_dir_all(&self.cfg.output_dir)
            .map_err(|e| io_err(&self.cfg.output_dir, e))
            .and_then(|_| self.cfg.validate().map_err(PipelineError::Config))
            .and_then(|_| match stage {
                Stage::Ingest => self.ingest(),
                Stage::Embed => self.embed(),
                Stage::Fit => self.fit(),
                Stage::Score => self.score(),
                Stage::Label => self.label(),
                Stage::Report => self.report(),
            });
        let millis = start.elapsed().as_millis();
        let result = result.map_err(|error| StageError { stage, error });
        self.record(stage, millis, &result);
        result.map(|_| ())
    }

    /// All stages in order, starting from a fresh manifest.
    pub fn run_all(&self) -> Result<(), StageError> {
        let _ = fs::remove_file(self.out(MANIFEST_JSON));
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    fn record(&self, stage: Stage, millis: u128, result: &Result<StageNote, StageError>) {
        let path = self.out(MANIFEST_JSON);
        let mut m: Manifest = read_json(&path).unwrap_or_else(|_| Manifest {
            tool: "mosaic".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.cfg.seed,
            jobs: self.jobs,
            config: self.cfg.clone(),
            provider_tag: None,
            best: None,
            stages: Vec::new(),
            status: "ok".into(),
            exit_code: 0,
            error: None,
        });
        m.config = self.cfg.clone();
        m.seed = self.cfg.seed;
        m.jobs = self.jobs;
        m.stages.push(StageRecord {
            stage,
            ok: result.is_ok(),
            millis,
        });
        match result {
            Ok(note) => {
                if note.provider_tag.is_some() {
                    m.provider_tag = note.provider_tag.clone();
                }
                if note.best.is_some() {
                    m.best = note.best;
                }
                m.status = "ok".into();
                m.exit_code = 0;
                m.error = None;
            }
            Err(e) => {
                m.status = if e.exit_code() == 2 { "rejected".into() } else { "error".into() };
                m.exit_code = e.exit_code();
                m.error = Some(ManifestError {
                    stage,
                    message: e.error.to_string(),
                });
            }
        }
        if fs::create_dir_all(&self.cfg.output_dir).is_ok() {
            if let Err(e) = write_json(&path, &m) {
                log::error!("cannot write manifest: {e}");
            }
        }
    }

    fn ingest(&self) -> Result<StageNote, PipelineError> {
        let (corpus, summary) = load_corpus(&self.cfg.corpus.path, self.cfg.corpus.format)?;
        log::info!("ingest: {} reports, {} sentences", corpus.reports.len(), corpus.sentences.len());
        write_json(&self.out(CORPUS_JSON), &CorpusArtifact { summary, corpus })?;
        Ok(StageNote::default())
    }

    fn embed(&self) -> Result<StageNote, PipelineError> {
        let c = self.load_corpus_artifact()?;
        let m = embed(&c.corpus.sentences, &self.cfg.embedder)?;
        log::info!("embed: {} x {} via {}", m.vectors.nrows(), m.vectors.ncols(), m.provider_tag);
        write_json(&self.out(EMBEDDINGS_JSON), &m)?;
        Ok(StageNote {
            provider_tag: Some(m.provider_tag),
            best: None,
        })
    }

    fn fit(&self) -> Result<StageNote, PipelineError> {
        let c = self.load_corpus_artifact()?;
        let e = self.load_embeddings()?;
        if e.vectors.nrows() != c.corpus.sentences.len() {
            return Err(PipelineError::Fit(format!(
                "{} embeddings for {} sentences; re-run embed",
                e.vectors.nrows(),
                c.corpus.sentences.len()
            )));
        }
        let texts = c.corpus.sentence_texts();
        let grid = self.cfg.effective_grid();
        let ctx = FitContext::new(
            &texts,
            &e.vectors,
            &grid,
            self.cfg.reducer_base(),
            self.cfg.topic.clone(),
            self.cfg.coherence.clone(),
            self.cfg.seed,
        )
        .map_err(PipelineError::Fit)?;
        log::info!("fit: {} grid combinations", grid.size());
        let ledger = match run_grid(&ctx, &grid, &self.cfg.bounds, self.jobs) {
            Ok(l) => l,
            Err(SearchError::AllRejected(l)) => {
                write_with(&self.out(GRID_CSV), |w| l.write_csv(w))?;
                return Err(PipelineError::AllRejected(l.results.len()));
            }
            Err(other) => return Err(PipelineError::Fit(other.to_string())),
        };
        write_with(&self.out(GRID_CSV), |w| ledger.write_csv(w))?;
        let best = ledger.best().expect("ledger has an accepted result").config;
        let fitted = ctx.fit(&best).map_err(PipelineError::Fit)?;
        let model = round_model(&fitted.model);
        write_json(&self.out(TOPICS_JSON), &model)?;
        write_with(&self.out(ASSIGNMENTS_CSV), |w| {
            use std::io::Write;
            writeln!(w, "sentence_id,report_id,topic_id,probability")?;
            for (i, s) in c.corpus.sentences.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    i,
                    s.report_id,
                    fitted.model.assignment.labels[i],
                    fmt_p(fitted.model.assignment.probabilities[i])
                )?;
            }
            Ok(())
        })?;
        let record = FitRecord {
            best,
            reducer_seed: derive_seed(self.cfg.seed, &best),
            grid_size: ledger.results.len(),
            accepted: ledger.accepted_count(),
            n_topics: fitted.model.topics.len(),
            raw_noise: fitted.raw.noise_count(),
            cv: round_sig(fitted.coherence.cv, 6),
            umass: round_sig(fitted.coherence.umass, 6),
        };
        log::info!("fit: best {:?} with {} topics, C_v {}", best, record.n_topics, record.cv);
        write_json(&self.out(FIT_JSON), &record)?;
        Ok(StageNote {
            provider_tag: None,
            best: Some(best),
        })
    }

    fn score(&self) -> Result<StageNote, PipelineError> {
        let model = self.load_topics()?;
        let c = self.load_corpus_artifact()?;
        let report = score_model(&model, &c.corpus.sentence_texts(), &self.cfg.coherence);
        write_json(&self.out(COHERENCE_JSON), &round_coherence(&report))?;
        Ok(StageNote::default())
    }

    fn label(&self) -> Result<StageNote, PipelineError> {
        let model = self.load_topics()?;
        let c = self.load_corpus_artifact()?;
        let client = if self.cfg.labeler.offline {
            None
        } else {
            Some(HttpChatClient::new(&self.cfg.labeler).map_err(PipelineError::Config)?)
        };
        let labelled = label_all(
            &model,
            &c.corpus.sentence_texts(),
            &self.cfg.labeler,
            client.as_ref().map(|c| c as &dyn ChatClient),
        );
        write_json(&self.out(TOPICS_JSON), &labelled)?;
        Ok(StageNote::default())
    }

    fn report(&self) -> Result<StageNote, PipelineError> {
        let model = self.load_topics()?;
        let e = self.load_embeddings()?;
        let fit = self.load_fit()?;
        let table = topic_table(&model);
        write_with(&self.out(TABLE_CSV), |w| table.write_csv(w))?;
        let dendro_path = self.out(DENDROGRAM_JSON);
        match topic_dendrogram(&model.ctfidf_matrix(), self.cfg.report.linkage) {
            Ok(mut d) => {
                for m in d.merges.iter_mut() {
                    m.distance = round_sig(m.distance, 6);
                }
                write_json(&dendro_path, &d)?;
            }
            Err(ReportError::TooFewTopics(m)) => {
                log::warn!("report: {m} topic(s), no dendrogram written");
                let _ = fs::remove_file(&dendro_path);
            }
            Err(other) => return Err(other.into()),
        }
        let base = crate::reducer::ReducerConfig {
            n_neighbors: fit.best.n_neighbors,
            min_dist: fit.best.min_dist,
            ..self.cfg.reducer_base()
        };
        let scatter = scatter_2d(&e.vectors, &model.assignment, Some(&model), &base, fit.reducer_seed)?;
        write_with(&self.out(SCATTER_CSV), |w| scatter.write_csv(w))?;
        let svg_path = self.out(SCATTER_SVG);
        if self.cfg.report.svg {
            fs::write(&svg_path, scatter.to_svg()).map_err(|err| io_err(&svg_path, err))?;
        }
        Ok(StageNote::default())
    }
}
