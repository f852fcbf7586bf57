//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clusterer::ClustererConfig;
use crate::coherence::CoherenceConfig;
use crate::corpus::CorpusFormat;
use crate::embedder::{EmbedderConfig, ProviderKind};
use crate::labeler::LabelerConfig;
use crate::reducer::ReducerConfig;
use crate::report::Linkage;
use crate::search::{Bounds, ParamGrid};
use crate::topics::TopicConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub path: PathBuf,
    pub format: CorpusFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ReportConfig {
    pub linkage: Linkage,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reducer: Option<ReducerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusterer: Option<ClustererConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<ParamGrid>,
    #[serde(default)]
    pub topic: TopicConfig,
    #[serde(default)]
    pub coherence: CoherenceConfig,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub labeler: LabelerConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    /// Reads a config file; relative corpus and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.corpus.path = resolve(base, &cfg.corpus.path);
        cfg.output_dir = resolve(base, &cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        match (&self.reducer, &self.clusterer, &self.grid) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => return Err("config needs either both `reducer` and `clusterer`, or a `grid`, not both".into()),
        }
        if let Some(g) = &self.grid {
            g.validate().map_err(|e| e.to_string())?;
        }
        if let Some(c) = &self.clusterer {
            c.validate().map_err(|e| e.to_string())?;
        }
        self.bounds.validate().map_err(|e| e.to_string())?;
        self.topic.validate().map_err(|e| e.to_string())?;
        self.coherence.validate()?;
        self.labeler.validate()?;
        self.embedder.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// The search grid; a fixed reducer + clusterer pair is a one-point grid.
    pub fn effective_grid(&self) -> ParamGrid {
        match (&self.grid, &self.reducer, &self.clusterer) {
            (Some(g), _, _) => g.clone(),
            (None, Some(r), Some(c)) => ParamGrid::single(r, c),
            _ => ParamGrid::default(),
        }
    }

    /// Layout settings shared by every grid point (epochs, metric, negative
    /// sampling); defaults in grid mode.
    pub fn reducer_base(&self) -> ReducerConfig {
        self.reducer.clone().unwrap_or_default()
    }

    /// Local hash embedder and fallback labels: no network access.
    pub fn force_offline(&mut self) {
        self.embedder.provider = ProviderKind::LocalHash;
        self.labeler.offline = true;
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
