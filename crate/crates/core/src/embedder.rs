//! Sentence embedding providers.
//!
//! Two providers sit behind [`EmbeddingProvider`]: an OpenAI-compatible
//! `/v1/embeddings` client for production runs, and a deterministic
//! character-trigram hashing embedder used offline and in tests.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceUnit;
use crate::matrix::{l2_normalize, Matrix};

/// Number of signed hashing buckets used by the local embedder.
pub const HASH_BUCKETS: usize = 4096;
pub const DEFAULT_DIM: usize = 768;
pub const API_KEY_ENV: &str = "MOSAIC_API_KEY";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no sentences to embed")]
    EmptyInput,
    #[error("embedding provider unavailable after {attempts} attempts: {last_error}")]
    ProviderUnavailable { attempts: usize, last_error: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    LocalHash,
}

/// Exponential backoff between retries: `base_delay * 2^k` before retry `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: usize) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << retry.min(16)))
    }

    /// Runs `op` until it succeeds or the retry budget is spent. Returns the
    /// number of attempts alongside the last error on failure.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, String>) -> Result<T, (usize, String)> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    if attempt >= self.max_retries {
                        return Err((attempt + 1, e));
                    }
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub provider: ProviderKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub batch_size: usize,
    pub batch_parallelism: usize,
    pub seed: u64,
    pub local_dim: usize,
    pub normalize: bool,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Remote,
            endpoint_url: None,
            model_name: "all-mpnet-base-v2".into(),
            batch_size: 32,
            batch_parallelism: 4,
            seed: 0,
            local_dim: DEFAULT_DIM,
            normalize: true,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

impl EmbedderConfig {
    pub fn local(seed: u64, dim: usize) -> Self {
        Self {
            provider: ProviderKind::LocalHash,
            seed,
            local_dim: dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.batch_size == 0 {
            return Err(EmbedError::InvalidConfig("batch_size must be >= 1".into()));
        }
        match self.provider {
            ProviderKind::Remote if self.endpoint_url.as_deref().map_or(true, str::is_empty) => Err(
                EmbedError::InvalidConfig("endpoint_url is required for the remote provider".into()),
            ),
            ProviderKind::LocalHash if self.local_dim < 8 => {
                Err(EmbedError::InvalidConfig("local_dim must be >= 8".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build_provider(&self) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        self.validate()?;
        Ok(match self.provider {
            ProviderKind::LocalHash => Box::new(LocalHashEmbedder::new(self.seed, self.local_dim)),
            ProviderKind::Remote => Box::new(RemoteEmbedder::new(self)?),
        })
    }
}

/// Row `i` of `vectors` embeds sentence `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub vectors: Matrix<f64>,
    pub provider_tag: String,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn tag(&self) -> String;

    /// Embeds one batch; the returned rows follow the order of `texts`.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

pub fn embed(sentences: &[SentenceUnit], cfg: &EmbedderConfig) -> Result<EmbeddingMatrix, EmbedError> {
    let provider = cfg.build_provider()?;
    let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
    embed_texts(provider.as_ref(), &texts, cfg.batch_size, cfg.batch_parallelism, cfg.normalize)
}

/// Embeds `texts` in batches of `batch_size`, with up to `parallelism`
/// batches in flight. Output order always matches input order.
pub fn embed_texts(
    provider: &dyn EmbeddingProvider,
    texts: &[&str],
    batch_size: usize,
    parallelism: usize,
    normalize: bool,
) -> Result<EmbeddingMatrix, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::EmptyInput);
    }
    let batches: Vec<&[&str]> = texts.chunks(batch_size.max(1)).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
    for wave in batches.chunks(parallelism.max(1)) {
        let results: Vec<Result<Vec<Vec<f64>>, EmbedError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| scope.spawn(move || provider.embed_batch(batch)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        for (batch, result) in wave.iter().zip(results) {
            let got = result?;
            if got.len() != batch.len() {
                return Err(EmbedError::ProviderUnavailable {
                    attempts: 1,
                    last_error: format!("provider returned {} rows for {} inputs", got.len(), batch.len()),
                });
            }
            rows.extend(got);
        }
    }
    let dim = rows[0].len();
    for r in &rows {
        if r.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::ProviderUnavailable {
                attempts: 1,
                last_error: "provider returned non-finite values".into(),
            });
        }
    }
    if normalize {
        rows.iter_mut().for_each(|r| l2_normalize(r));
    }
    Ok(EmbeddingMatrix {
        vectors: Matrix::from_rows(&rows).expect("rows checked for equal length"),
        provider_tag: provider.tag(),
    })
}

// ---------------------------------------------------------------------------
// Local hashing embedder

#[inline]
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed hashed character-trigram counts of the lowercased text, keyed by
/// bucket. Texts shorter than three characters hash as a single gram.
pub fn hashed_trigram_features(text: &str) -> BTreeMap<usize, f64> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut feats = BTreeMap::new();
    let mut add = |gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = fnv1a64(s.as_bytes());
        let bucket = (h % HASH_BUCKETS as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        *feats.entry(bucket).or_insert(0.0) += sign;
    };
    if chars.is_empty() {
        return feats;
    }
    if chars.len() < 3 {
        add(&chars);
    } else {
        chars.windows(3).for_each(&mut add);
    }
    feats.retain(|_, v| *v != 0.0);
    feats
}

/// Deterministic trigram-hashing embedder with a seeded Gaussian projection.
pub struct LocalHashEmbedder {
    seed: u64,
    dim: usize,
    projection: OnceLock<Vec<f64>>,
}

impl LocalHashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= 8, "local embedding dimension must be >= 8");
        Self {
            seed,
            dim,
            projection: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn projection(&self) -> &[f64] {
        self.projection.get_or_init(|| {
            let dim = self.dim;
            let mut m = vec![0.0; HASH_BUCKETS * dim];
            m.par_chunks_mut(dim).enumerate().for_each(|(bucket, row)| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(bucket as u64);
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
            });
            m
        })
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let proj = self.projection();
        let mut out = vec![0.0; self.dim];
        for (bucket, weight) in hashed_trigram_features(text) {
            let row = &proj[bucket * self.dim..(bucket + 1) * self.dim];
            for (o, r) in out.iter_mut().zip(row) {
                *o += weight * r;
            }
        }
        l2_normalize(&mut out);
        out
    }
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn tag(&self) -> String {
        format!("local_hash(seed={},dim={})", self.seed, self.dim)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// One-off form of [`LocalHashEmbedder::embed_text`].
pub fn local_hash_embed(text: &str, seed: u64, dim: usize) -> Vec<f64> {
    LocalHashEmbedder::new(seed, dim).embed_text(text)
}

// ---------------------------------------------------------------------------
// Remote OpenAI-compatible embedder

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EmbeddingRequest {
    pub model: String,
    pub input: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbedderConfig) -> Result<Self, EmbedError> {
        let base = cfg
            .endpoint_url
            .as_deref()
            .ok_or_else(|| EmbedError::InvalidConfig("endpoint_url missing".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| EmbedError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/v1/embeddings", base.trim_end_matches('/')),
            model: cfg.model_name.clone(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            retry: cfg.retry,
        })
    }

    fn post_once(&self, body: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, String> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: EmbeddingResponse = resp.json().map_err(|e| e.to_string())?;
        if parsed.data.len() != body.input.len() {
            return Err(format!(
                "expected {} embeddings, got {}",
                body.input.len(),
                parsed.data.len()
            ));
        }
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; parsed.data.len()];
        for (pos, d) in parsed.data.into_iter().enumerate() {
            let slot = d.index.unwrap_or(pos);
            if slot >= rows.len() || rows[slot].is_some() {
                return Err(format!("invalid embedding index {slot}"));
            }
            rows[slot] = Some(d.embedding);
        }
        Ok(rows.into_iter().map(|r| r.expect("all slots filled")).collect())
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn tag(&self) -> String {
        format!("remote({})", self.model)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = EmbeddingRequest {
            model: self.model.clone(),
            input: texts.iter().map(|s| s.to_string()).collect(),
        };
        let rows = self
            .retry
            .run(|| self.post_once(&body))
            .map_err(|(attempts, last_error)| {
                log::error!("embedding batch failed after {attempts} attempts: {last_error}");
                EmbedError::ProviderUnavailable { attempts, last_error }
            })?;
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                return Err(EmbedError::DimensionMismatch {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        Ok(rows)
    }
}
