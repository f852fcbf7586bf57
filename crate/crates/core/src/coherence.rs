//! Topic coherence: UMass over sentence co-occurrence and C_v over
//! sliding-window NPMI context vectors.

use std::collections::{BTreeSet, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::text::tokenize;
use crate::topics::TopicModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceConfig {
    pub window_size: usize,
    pub top_n: usize,
    pub umass_epsilon: f64,
    pub cv_epsilon: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            window_size: 110,
            top_n: 10,
            umass_epsilon: 1.0,
            cv_epsilon: 1e-12,
        }
    }
}

impl CoherenceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.window_size < 2 {
            return Err("coherence window_size must be >= 2".into());
        }
        if self.top_n == 0 {
            return Err("coherence top_n must be >= 1".into());
        }
        if !(self.umass_epsilon > 0.0 && self.cv_epsilon > 0.0) {
            return Err("coherence epsilons must be positive".into());
        }
        Ok(())
    }
}

/// Tokenised sentences with a shared token index.
#[derive(Debug, Clone)]
pub struct ReferenceCorpus {
    ids: HashMap<String, u32>,
    /// Distinct token ids per non-empty sentence, sorted.
    docs: Vec<Vec<u32>>,
    /// Token id streams per non-empty sentence, original order.
    streams: Vec<Vec<u32>>,
}

impl ReferenceCorpus {
    pub fn from_tokens(sentences: &[Vec<String>]) -> Self {
        let mut ids: HashMap<String, u32> = HashMap::new();
        let mut streams = Vec::new();
        for s in sentences.iter().filter(|s| !s.is_empty()) {
            let stream: Vec<u32> = s
                .iter()
                .map(|t| {
                    let next = ids.len() as u32;
                    *ids.entry(t.clone()).or_insert(next)
                })
                .collect();
            streams.push(stream);
        }
        let docs = streams.iter().map(|s| sorted_unique(s)).collect();
        Self { ids, docs, streams }
    }

    pub fn from_texts(texts: &[&str]) -> Self {
        let toks: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        Self::from_tokens(&toks)
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    /// Boolean windows: every run of `size` consecutive tokens, or the whole
    /// sentence when it is shorter.
    fn windows(&self, size: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        for s in &self.streams {
            if s.len() <= size {
                out.push(sorted_unique(s));
            } else {
                out.extend(s.windows(size).map(sorted_unique));
            }
        }
        out
    }
}

fn sorted_unique(s: &[u32]) -> Vec<u32> {
    s.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

fn contains(doc: &[u32], id: u32) -> bool {
    doc.binary_search(&id).is_ok()
}

/// UMass for one ranked word list: mean over pairs `i < j` of
/// `ln((D(w_i, w_j) + ε) / D(w_j))`. Pairs whose `w_j` never occurs are
/// skipped; `None` when every pair was skipped. A single word scores 0.
pub fn umass(words: &[String], corpus: &ReferenceCorpus, epsilon: f64) -> Option<f64> {
    if words.len() < 2 {
        return Some(0.0);
    }
    let ids: Vec<Option<u32>> = words.iter().map(|w| corpus.id(w)).collect();
    let df = |a: u32| corpus.docs.iter().filter(|d| contains(d, a)).count();
    let co = |a: u32, b: u32| corpus.docs.iter().filter(|d| contains(d, a) && contains(d, b)).count();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for j in 1..words.len() {
        let Some(wj) = ids[j] else {
            warn!("umass: word {:?} absent from corpus, skipping its pairs", words[j]);
            continue;
        };
        let dj = df(wj);
        for i in 0..j {
            let joint = ids[i].map_or(0, |wi| co(wi, wj));
            sum += ((joint as f64 + epsilon) / dj as f64).ln();
            pairs += 1;
        }
    }
    if pairs == 0 {
        warn!("umass: every pair skipped for topic {:?}", words);
        return None;
    }
    Some(sum / pairs as f64)
}

/// C_v for one word list with boolean sliding windows, NPMI context
/// vectors over the topic's own words and one-set segmentation compared by
/// cosine. Words absent from every window are dropped; `None` when none
/// remain.
pub fn cv(words: &[String], corpus: &ReferenceCorpus, window_size: usize, epsilon: f64) -> Option<f64> {
    let windows = corpus.windows(window_size);
    cv_over(words, corpus, &windows, epsilon)
}

fn cv_over(words: &[String], corpus: &ReferenceCorpus, windows: &[Vec<u32>], epsilon: f64) -> Option<f64> {
    let mut ids: Vec<u32> = Vec::new();
    for w in words {
        match corpus.id(w) {
            Some(id) if !ids.contains(&id) => ids.push(id),
            Some(_) => {}
            None => warn!("cv: word {w:?} absent from corpus, dropped"),
        }
    }
    if ids.is_empty() || windows.is_empty() {
        return None;
    }
    let n = ids.len();
    let total = windows.len() as f64;
    let mut single = vec![0usize; n];
    let mut joint = vec![vec![0usize; n]; n];
    for win in windows {
        let present: Vec<usize> = (0..n).filter(|&k| contains(win, ids[k])).collect();
        for &a in &present {
            single[a] += 1;
            for &b in &present {
                joint[a][b] += 1;
            }
        }
    }
    let npmi = |a: usize, b: usize| {
        let pab = joint[a][b] as f64 / total + epsilon;
        let pa = single[a] as f64 / total;
        let pb = single[b] as f64 / total;
        (pab / (pa * pb)).ln() / -pab.ln()
    };
    let vectors: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| npmi(a, b)).collect()).collect();
    let sum: Vec<f64> = (0..n).map(|b| vectors.iter().map(|v| v[b]).sum()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sum_norm = norm(&sum);
    let total_cos: f64 = vectors
        .iter()
        .map(|v| {
            let vn = norm(v);
            if vn < 1e-9 || sum_norm < 1e-9 {
                0.0
            } else {
                v.iter().zip(&sum).map(|(a, b)| a * b).sum::<f64>() / (vn * sum_norm)
            }
        })
        .sum();
    Some(total_cos / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// Mean C_v clipped to [0, 1].
    pub cv: f64,
    pub cv_raw: f64,
    pub umass: f64,
    /// `None` for topics whose score is undefined; excluded from the means.
    pub per_topic_cv: Vec<Option<f64>>,
    pub per_topic_umass: Vec<Option<f64>>,
    pub window_size: usize,
    pub epsilon: f64,
    pub umass_epsilon: f64,
}

fn mean_defined(xs: &[Option<f64>]) -> f64 {
    let vals: Vec<f64> = xs.iter().flatten().copied().collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Scores ranked word lists against the reference corpus.
pub fn score_word_lists(topics: &[Vec<String>], corpus: &ReferenceCorpus, cfg: &CoherenceConfig) -> CoherenceReport {
    let windows = corpus.windows(cfg.window_size);
    let per_topic_cv: Vec<Option<f64>> =
        topics.iter().map(|t| cv_over(t, corpus, &windows, cfg.cv_epsilon)).collect();
    let per_topic_umass: Vec<Option<f64>> =
        topics.iter().map(|t| umass(t, corpus, cfg.umass_epsilon)).collect();
    let cv_raw = mean_defined(&per_topic_cv);
    CoherenceReport {
        cv: cv_raw.clamp(0.0, 1.0),
        cv_raw,
        umass: mean_defined(&per_topic_umass),
        per_topic_cv,
        per_topic_umass,
        window_size: cfg.window_size,
        epsilon: cfg.cv_epsilon,
        umass_epsilon: cfg.umass_epsilon,
    }
}

/// Top-`n` single-word keywords of each topic, in rank order.
pub fn topic_word_lists(model: &TopicModel, top_n: usize) -> Vec<Vec<String>> {
    model
        .topics
        .iter()
        .map(|t| {
            t.keywords
                .iter()
                .filter(|k| !k.term.contains(' '))
                .take(top_n)
                .map(|k| k.term.clone())
                .collect()
        })
        .collect()
}

pub fn score(model: &TopicModel, sentences: &[&str], cfg: &CoherenceConfig) -> CoherenceReport {
    let corpus = ReferenceCorpus::from_texts(sentences);
    score_word_lists(&topic_word_lists(model, cfg.top_n), &corpus, cfg)
}
