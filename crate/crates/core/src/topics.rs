//! Topic extraction from cluster assignments: term counting per cluster,
//! class-based TF-IDF keyword weights, representative sentences and
//! similarity-threshold reassignment of outliers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusterer::{ClusterAssignment, NOISE};
use crate::matrix::{centroid, cosine_similarity, Matrix};
use crate::scalar::{total_cmp, Scalar};
use crate::text::{terms, tokenize};

/// Smallest probability given to a reassigned outlier; keeps "probability
/// zero" reserved for noise.
const MIN_REASSIGNED_PROBABILITY: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum TopicError {
    #[error("no clustered sentences to build a vocabulary from")]
    NoClusters,
    #[error("every token was filtered out; vocabulary is empty")]
    EmptyVocabulary,
    #[error("{0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicConfig {
    pub top_k_keywords: usize,
    pub outlier_threshold: f64,
    pub representatives: usize,
    pub min_df: usize,
}

impl Default for TopicConfig {
    fn default() -> Self {
        Self {
            top_k_keywords: 10,
            outlier_threshold: 0.3,
            representatives: 3,
            min_df: 2,
        }
    }
}

impl TopicConfig {
    pub fn validate(&self) -> Result<(), TopicError> {
        if !(1..=15).contains(&self.top_k_keywords) {
            return Err(TopicError::InvalidInput("top_k_keywords must lie in 1..=15".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_threshold) {
            return Err(TopicError::InvalidInput("outlier_threshold must lie in [0, 1]".into()));
        }
        if self.representatives == 0 {
            return Err(TopicError::InvalidInput("representatives must be >= 1".into()));
        }
        Ok(())
    }
}

/// Terms in lexicographic order with their sentence document frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    pub document_frequency: Vec<usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }
}

/// Counts unigrams and bigrams of the clustered sentences, one row per
/// cluster. Terms occurring in fewer than `min_df` clustered sentences are
/// dropped.
pub fn build_vocabulary(
    sentences: &[&str],
    assignment: &ClusterAssignment,
    min_df: usize,
) -> Result<(Vocabulary, Matrix<f64>), TopicError> {
    if sentences.len() != assignment.len() {
        return Err(TopicError::InvalidInput(format!(
            "{} sentences but {} labels",
            sentences.len(),
            assignment.len()
        )));
    }
    let m = assignment.n_clusters();
    if m == 0 {
        return Err(TopicError::NoClusters);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_sentence: Vec<(usize, Vec<String>)> = Vec::new();
    for (text, &label) in sentences.iter().zip(&assignment.labels) {
        if label == NOISE {
            continue;
        }
        let ts = terms(&tokenize(text));
        for t in ts.iter().collect::<BTreeSet<_>>() {
            *df.entry(t.clone()).or_insert(0) += 1;
        }
        per_sentence.push((label as usize, ts));
    }
    df.retain(|_, &mut f| f >= min_df.max(1));
    if df.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    let vocab = Vocabulary {
        terms: df.keys().cloned().collect(),
        document_frequency: df.values().copied().collect(),
    };
    let mut counts = Matrix::zeros(m, vocab.len());
    for (class, ts) in per_sentence {
        for t in ts {
            if let Some(j) = vocab.index_of(&t) {
                counts.set(class, j, counts.get(class, j) + 1.0);
            }
        }
    }
    Ok((vocab, counts))
}

/// Class-based TF-IDF: `(count[c,t] / Σ_t count[c,t]) · ln(1 + A / f_t)`
/// with `f_t` the total count of term `t` over all classes and `A` the
/// average total count per class.
pub fn ctfidf<T: Scalar>(counts: &Matrix<T>) -> Matrix<T> {
    let (m, v) = (counts.nrows(), counts.ncols());
    let mut out = Matrix::zeros(m, v);
    if m == 0 {
        return out;
    }
    let mut term_totals = vec![T::zero(); v];
    let mut class_totals = vec![T::zero(); m];
    for c in 0..m {
        for (t, &x) in counts.row(c).iter().enumerate() {
            term_totals[t] = term_totals[t] + x;
            class_totals[c] = class_totals[c] + x;
        }
    }
    let avg = class_totals.iter().copied().sum::<T>() / T::from_usize_lossy(m);
    for c in 0..m {
        if class_totals[c] == T::zero() {
            continue;
        }
        for t in 0..v {
            let x = counts.get(c, t);
            if x == T::zero() || term_totals[t] == T::zero() {
                continue;
            }
            let tf = x / class_totals[c];
            out.set(c, t, tf * (T::one() + avg / term_totals[t]).ln());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: usize,
    pub keywords: Vec<Keyword>,
    pub size: usize,
    /// Sentence indices, most central first.
    pub representatives: Vec<usize>,
    #[serde(default)]
    pub label: String,
}

impl Topic {
    pub fn keyword_terms(&self) -> Vec<&str> {
        self.keywords.iter().map(|k| k.term.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub topics: Vec<Topic>,
    pub vocabulary: Vec<String>,
    /// One row per topic id, one column per vocabulary term.
    pub ctfidf: Vec<Vec<f64>>,
    pub outlier_count: usize,
    /// Assignment after outlier reduction.
    pub assignment: ClusterAssignment,
}

impl TopicModel {
    pub fn ctfidf_matrix(&self) -> Matrix<f64> {
        if self.ctfidf.is_empty() {
            return Matrix::zeros(0, self.vocabulary.len());
        }
        Matrix::from_rows(&self.ctfidf).expect("ctfidf rows share the vocabulary width")
    }

    pub fn n_sentences(&self) -> usize {
        self.assignment.len()
    }
}

/// Highest-weight terms of a row, weight descending then term ascending.
/// Zero weights are never returned.
pub fn top_keywords(row: &[f64], vocabulary: &[String], k: usize) -> Vec<Keyword> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
    idx.sort_by(|&a, &b| total_cmp(row[b], row[a]).then(vocabulary[a].cmp(&vocabulary[b])));
    idx.into_iter()
        .take(k)
        .map(|j| Keyword {
            term: vocabulary[j].clone(),
            weight: row[j],
        })
        .collect()
}

/// The `r` members closest (by cosine) to the members' mean embedding,
/// ties broken by lower sentence index.
pub fn select_representatives<T: Scalar>(members: &[usize], embeddings: &Matrix<T>, r: usize) -> Vec<usize> {
    if members.is_empty() {
        return Vec::new();
    }
    let c = centroid(embeddings, members);
    let mut scored: Vec<(T, usize)> = members
        .iter()
        .map(|&i| (cosine_similarity(embeddings.row(i), &c), i))
        .collect();
    scored.sort_by(|a, b| total_cmp(b.0, a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(r.max(1)).map(|(_, i)| i).collect()
}

/// Moves each noise point to the cluster whose centroid is most similar
/// when that similarity reaches `threshold`. Similarity is cosine clipped
/// to [0, 1]; equal similarities go to the lower cluster id. Centroids come
/// from the original members only.
pub fn reduce_outliers<T: Scalar>(
    assignment: &ClusterAssignment,
    embeddings: &Matrix<T>,
    threshold: f64,
) -> ClusterAssignment {
    let m = assignment.n_clusters();
    let mut out = assignment.clone();
    if m == 0 {
        return out;
    }
    let centroids: Vec<Vec<T>> = (0..m).map(|c| centroid(embeddings, &assignment.members(c))).collect();
    for (i, &label) in assignment.labels.iter().enumerate() {
        if label != NOISE {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for (c, cen) in centroids.iter().enumerate() {
            let sim = cosine_similarity(embeddings.row(i), cen).as_f64().clamp(0.0, 1.0);
            if best.map_or(true, |(b, _)| sim > b) {
                best = Some((sim, c));
            }
        }
        if let Some((sim, c)) = best {
            if sim >= threshold {
                out.labels[i] = c as i32;
                out.probabilities[i] = sim.max(MIN_REASSIGNED_PROBABILITY);
            }
        }
    }
    out
}

/// Builds the topic model from a raw clusterer assignment: outlier
/// reduction first, then counting, weighting and representative selection
/// on the final assignment.
pub fn extract_topics(
    sentences: &[&str],
    embeddings: &Matrix<f64>,
    raw: &ClusterAssignment,
    cfg: &TopicConfig,
) -> Result<TopicModel, TopicError> {
    cfg.validate()?;
    if embeddings.nrows() != sentences.len() {
        return Err(TopicError::InvalidInput(format!(
            "{} sentences but {} embedding rows",
            sentences.len(),
            embeddings.nrows()
        )));
    }
    let assignment = reduce_outliers(raw, embeddings, cfg.outlier_threshold);
    let (vocab, counts) = build_vocabulary(sentences, &assignment, cfg.min_df)?;
    let weights = ctfidf(&counts);
    let topics = (0..assignment.n_clusters())
        .map(|c| {
            let members = assignment.members(c);
            Topic {
                id: c,
                keywords: top_keywords(weights.row(c), &vocab.terms, cfg.top_k_keywords),
                size: members.len(),
                representatives: select_representatives(&members, embeddings, cfg.representatives),
                label: String::new(),
            }
        })
        .collect();
    Ok(TopicModel {
        topics,
        ctfidf: weights.rows_iter().map(<[f64]>::to_vec).collect(),
        vocabulary: vocab.terms,
        outlier_count: assignment.noise_count(),
        assignment,
    })
}
