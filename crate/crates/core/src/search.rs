//! Hyperparameter grid search over reducer × clusterer settings, filtered
//! by admissible topic counts and ranked by C_v.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusterer::{cluster, ClusterAssignment, ClustererConfig};
use crate::coherence::{score_word_lists, topic_word_lists, CoherenceConfig, CoherenceReport, ReferenceCorpus};
use crate::format::fmt_f;
use crate::matrix::Matrix;
use crate::reducer::{knn_graph, reduce_with_knn, Knn, ReducedEmbedding, ReducerConfig};
use crate::topics::{extract_topics, TopicConfig, TopicModel};

/// Runs with more than this fraction of raw noise points are degenerate.
pub const MAX_NOISE_FRACTION: f64 = 0.9;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no grid combination produced an admissible topic count")]
    AllRejected(GridLedger),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub n_components: Vec<usize>,
    pub n_neighbors: Vec<usize>,
    pub min_dist: Vec<f64>,
    pub min_cluster_size: Vec<usize>,
    pub min_samples: Vec<usize>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            n_components: vec![10, 15, 18, 20],
            n_neighbors: vec![15, 20, 25],
            min_dist: vec![0.0, 0.025, 0.1],
            min_cluster_size: vec![5, 10, 15],
            min_samples: vec![5, 10],
        }
    }
}

impl ParamGrid {
    /// A grid holding exactly one combination.
    pub fn single(reducer: &ReducerConfig, clusterer: &ClustererConfig) -> Self {
        Self {
            n_components: vec![reducer.n_components],
            n_neighbors: vec![reducer.n_neighbors],
            min_dist: vec![reducer.min_dist],
            min_cluster_size: vec![clusterer.min_cluster_size],
            min_samples: vec![clusterer.min_samples],
        }
    }

    pub fn size(&self) -> usize {
        self.n_components.len()
            * self.n_neighbors.len()
            * self.min_dist.len()
            * self.min_cluster_size.len()
            * self.min_samples.len()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.size() == 0 {
            return Err(SearchError::InvalidGrid("every parameter list must be non-empty".into()));
        }
        if self.min_dist.iter().any(|d| !d.is_finite()) {
            return Err(SearchError::InvalidGrid("min_dist values must be finite".into()));
        }
        Ok(())
    }

    /// All combinations, deduplicated, in lexicographic config order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.size());
        for &n_components in &self.n_components {
            for &n_neighbors in &self.n_neighbors {
                for &min_dist in &self.min_dist {
                    for &min_cluster_size in &self.min_cluster_size {
                        for &min_samples in &self.min_samples {
                            out.push(GridPoint {
                                n_components,
                                n_neighbors,
                                min_dist,
                                min_cluster_size,
                                min_samples,
                            });
                        }
                    }
                }
            }
        }
        out.sort_by(GridPoint::lex_cmp);
        out.dedup_by(|a, b| a.lex_cmp(b) == Ordering::Equal);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n_components: usize,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl GridPoint {
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        self.n_components
            .cmp(&other.n_components)
            .then(self.n_neighbors.cmp(&other.n_neighbors))
            .then(self.min_dist.total_cmp(&other.min_dist))
            .then(self.min_cluster_size.cmp(&other.min_cluster_size))
            .then(self.min_samples.cmp(&other.min_samples))
    }

    /// Reducer settings for this point; epochs, metric and negative rate
    /// come from `base`, the seed from [`derive_seed`].
    pub fn reducer_config(&self, base: &ReducerConfig, global_seed: u64) -> ReducerConfig {
        ReducerConfig {
            n_components: self.n_components,
            n_neighbors: self.n_neighbors,
            min_dist: self.min_dist,
            seed: derive_seed(global_seed, self),
            ..base.clone()
        }
    }

    pub fn clusterer_config(&self) -> ClustererConfig {
        ClustererConfig {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
        }
    }

    fn reducer_key(&self) -> (usize, usize, u64) {
        (self.n_components, self.n_neighbors, self.min_dist.to_bits())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-combination reducer seed. Only the reducer parameters enter the
/// hash: the clusterer is deterministic, so combinations sharing a
/// reduction can share its layout.
pub fn derive_seed(global_seed: u64, point: &GridPoint) -> u64 {
    let mut h = splitmix64(global_seed);
    for v in [point.n_components as u64, point.n_neighbors as u64, point.min_dist.to_bits()] {
        h = splitmix64(h ^ v);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_topics: usize,
    pub max_topics: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            min_topics: 5,
            max_topics: 25,
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.min_topics < 1 || self.min_topics >= self.max_topics {
            return Err(SearchError::InvalidGrid(format!(
                "bounds need 1 <= min_topics < max_topics, got ({}, {})",
                self.min_topics, self.max_topics
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    TooFew,
    TooMany,
    Degenerate,
    None,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::TooFew => "TOO_FEW",
            RejectReason::TooMany => "TOO_MANY",
            RejectReason::Degenerate => "DEGENERATE",
            RejectReason::None => "NONE",
        }
    }
}

/// What a single fit reports back to the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub n_topics: usize,
    /// Noise points straight out of the clusterer, before outlier reduction.
    pub raw_noise: usize,
    pub n_points: usize,
    pub cv: f64,
    pub umass: f64,
}

pub fn classify(outcome: &FitOutcome, bounds: &Bounds) -> RejectReason {
    let noise_fraction = if outcome.n_points == 0 {
        1.0
    } else {
        outcome.raw_noise as f64 / outcome.n_points as f64
    };
    if outcome.n_topics == 0 || noise_fraction > MAX_NOISE_FRACTION {
        RejectReason::Degenerate
    } else if outcome.n_topics < bounds.min_topics {
        RejectReason::TooFew
    } else if outcome.n_topics > bounds.max_topics {
        RejectReason::TooMany
    } else {
        RejectReason::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub config: GridPoint,
    pub n_topics: usize,
    pub cv: f64,
    pub umass: f64,
    pub accepted: bool,
    pub reject_reason: RejectReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GridSearchResult {
    fn from_fit(config: GridPoint, fit: Result<FitOutcome, String>, bounds: &Bounds) -> Self {
        match fit {
            Ok(o) => {
                let reason = classify(&o, bounds);
                Self {
                    config,
                    n_topics: o.n_topics,
                    cv: o.cv,
                    umass: o.umass,
                    accepted: reason == RejectReason::None,
                    reject_reason: reason,
                    error: None,
                }
            }
            Err(e) => Self {
                config,
                n_topics: 0,
                cv: 0.0,
                umass: 0.0,
                accepted: false,
                reject_reason: RejectReason::Degenerate,
                error: Some(e),
            },
        }
    }
}

/// Accepted first, then higher C_v, fewer topics, lexicographic config.
pub fn rank_cmp(a: &GridSearchResult, b: &GridSearchResult) -> Ordering {
    b.accepted
        .cmp(&a.accepted)
        .then(b.cv.total_cmp(&a.cv))
        .then(a.n_topics.cmp(&b.n_topics))
        .then(a.config.lex_cmp(&b.config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLedger {
    pub bounds: Bounds,
    /// Every combination, ranked.
    pub results: Vec<GridSearchResult>,
}

impl GridLedger {
    pub fn best(&self) -> Option<&GridSearchResult> {
        self.results.first().filter(|r| r.accepted)
    }

    pub fn accepted_count(&self) -> usize {
        self.results.iter().filter(|r| r.accepted).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "n_components,n_neighbors,min_dist,min_cluster_size,min_samples,n_topics,cv,umass,accepted,reject_reason"
        )?;
        for r in &self.results {
            let c = &r.config;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                c.n_components,
                c.n_neighbors,
                fmt_f(c.min_dist),
                c.min_cluster_size,
                c.min_samples,
                r.n_topics,
                fmt_f(r.cv),
                fmt_f(r.umass),
                r.accepted,
                r.reject_reason.as_str()
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ledger is ASCII")
    }
}

fn with_pool<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, SearchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SearchError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

fn finish(results: Vec<GridSearchResult>, bounds: Bounds) -> Result<GridLedger, SearchError> {
    let mut results = results;
    results.sort_by(rank_cmp);
    let ledger = GridLedger { bounds, results };
    if ledger.best().is_none() {
        return Err(SearchError::AllRejected(ledger));
    }
    Ok(ledger)
}

/// Runs `fit` on every combination with `jobs` workers. Results are
/// ranked deterministically regardless of completion order.
pub fn run_grid_with<F>(grid: &ParamGrid, bounds: &Bounds, jobs: usize, fit: F) -> Result<GridLedger, SearchError>
where
    F: Fn(&GridPoint) -> Result<FitOutcome, String> + Sync,
{
    use rayon::prelude::*;
    grid.validate()?;
    bounds.validate()?;
    let points = grid.points();
    let results = with_pool(jobs, || {
        points
            .par_iter()
            .map(|p| GridSearchResult::from_fit(*p, fit(p), bounds))
            .collect::<Vec<_>>()
    })?;
    finish(results, *bounds)
}

/// Everything a real fit needs besides the grid point.
pub struct FitContext<'a> {
    pub sentences: &'a [&'a str],
    pub embeddings: &'a Matrix<f64>,
    pub reducer_base: ReducerConfig,
    pub topic: TopicConfig,
    pub coherence: CoherenceConfig,
    pub seed: u64,
    knn: Knn<f64>,
    reference: ReferenceCorpus,
}

/// Complete result of fitting one combination.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub point: GridPoint,
    pub reduced: ReducedEmbedding<f64>,
    pub raw: ClusterAssignment,
    pub model: TopicModel,
    pub coherence: CoherenceReport,
}

impl<'a> FitContext<'a> {
    /// Computes the neighbour graph once, wide enough for every
    /// `n_neighbors` in `grid`.
    pub fn new(
        sentences: &'a [&'a str],
        embeddings: &'a Matrix<f64>,
        grid: &ParamGrid,
        reducer_base: ReducerConfig,
        topic: TopicConfig,
        coherence: CoherenceConfig,
        seed: u64,
    ) -> Result<Self, String> {
        let n = embeddings.nrows();
        let kmax = grid.n_neighbors.iter().copied().max().unwrap_or(2).min(n.saturating_sub(1)).max(1);
        let knn = knn_graph(embeddings, kmax, reducer_base.metric).map_err(|e| e.to_string())?;
        Ok(Self {
            sentences,
            embeddings,
            reducer_base,
            topic,
            coherence,
            seed,
            knn,
            reference: ReferenceCorpus::from_texts(sentences),
        })
    }

    pub fn reduce(&self, point: &GridPoint) -> Result<ReducedEmbedding<f64>, String> {
        let cfg = point.reducer_config(&self.reducer_base, self.seed);
        reduce_with_knn(&self.knn, self.embeddings.ncols(), &cfg).map_err(|e| e.to_string())
    }

    pub fn fit_reduced(&self, point: &GridPoint, reduced: ReducedEmbedding<f64>) -> Result<Fitted, String> {
        let (raw, _) = cluster(&reduced.coords, &point.clusterer_config()).map_err(|e| e.to_string())?;
        let model = extract_topics(self.sentences, self.embeddings, &raw, &self.topic).map_err(|e| e.to_string())?;
        let coherence = score_word_lists(&topic_word_lists(&model, self.coherence.top_n), &self.reference, &self.coherence);
        Ok(Fitted {
            point: *point,
            reduced,
            raw,
            model,
            coherence,
        })
    }

    pub fn fit(&self, point: &GridPoint) -> Result<Fitted, String> {
        self.fit_reduced(point, self.reduce(point)?)
    }
}

fn outcome(f: &Fitted) -> FitOutcome {
    FitOutcome {
        n_topics: f.model.topics.len(),
        raw_noise: f.raw.noise_count(),
        n_points: f.raw.len(),
        cv: f.coherence.cv,
        umass: f.coherence.umass,
    }
}

/// Full grid search: one reduction per distinct reducer setting, shared by
/// all clusterer settings, with reductions spread over `jobs` workers.
pub fn run_grid(ctx: &FitContext<'_>, grid: &ParamGrid, bounds: &Bounds, jobs: usize) -> Result<GridLedger, SearchError> {
    use rayon::prelude::*;
    grid.validate()?;
    bounds.validate()?;
    let mut groups: BTreeMap<(usize, usize, u64), Vec<GridPoint>> = BTreeMap::new();
    for p in grid.points() {
        groups.entry(p.reducer_key()).or_default().push(p);
    }
    let groups: Vec<Vec<GridPoint>> = groups.into_values().collect();
    let results = with_pool(jobs, || {
        groups
            .par_iter()
            .flat_map_iter(|pts| {
                let reduced = ctx.reduce(&pts[0]);
                pts.iter()
                    .map(|p| {
                        let fit = reduced
                            .clone()
                            .and_then(|r| ctx.fit_reduced(p, r))
                            .map(|f| outcome(&f));
                        if let Err(e) = &fit {
                            log::warn!("grid point {p:?} failed: {e}");
                        }
                        GridSearchResult::from_fit(*p, fit, bounds)
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    })?;
    finish(results, *bounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(n_topics: usize, cv: f64) -> FitOutcome {
        FitOutcome {
            n_topics,
            raw_noise: 0,
            n_points: 100,
            cv,
            umass: -1.0,
        }
    }

    fn tiny_grid() -> ParamGrid {
        ParamGrid {
            n_components: vec![2],
            n_neighbors: vec![5],
            min_dist: vec![0.0],
            min_cluster_size: vec![5, 10, 15],
            min_samples: vec![5],
        }
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(ParamGrid::default().size(), 216);
        assert_eq!(ParamGrid::default().points().len(), 216);
    }

    #[test]
    fn only_in_bounds_candidate_accepted() {
        let ledger = run_grid_with(&tiny_grid(), &Bounds::default(), 2, |p| {
            Ok(match p.min_cluster_size {
                5 => fake(30, 0.9),
                10 => fake(10, 0.4),
                _ => fake(3, 0.8),
            })
        })
        .unwrap();
        assert_eq!(ledger.results.len(), 3);
        assert_eq!(ledger.accepted_count(), 1);
        let best = ledger.best().unwrap();
        assert_eq!(best.n_topics, 10);
        assert_eq!(ledger.results[1].reject_reason, RejectReason::TooMany);
        assert_eq!(ledger.results[2].reject_reason, RejectReason::TooFew);
    }

    #[test]
    fn ties_prefer_fewer_topics_then_config_order() {
        let ledger = run_grid_with(&tiny_grid(), &Bounds::default(), 1, |p| {
            Ok(match p.min_cluster_size {
                5 => fake(12, 0.5),
                10 => fake(8, 0.5),
                _ => fake(8, 0.5),
            })
        })
        .unwrap();
        let order: Vec<usize> = ledger.results.iter().map(|r| r.config.min_cluster_size).collect();
        assert_eq!(order, vec![10, 15, 5]);
    }

    #[test]
    fn all_rejected_keeps_ledger() {
        let err = run_grid_with(&tiny_grid(), &Bounds::default(), 1, |_| Ok(fake(2, 0.7))).unwrap_err();
        match err {
            SearchError::AllRejected(ledger) => {
                assert_eq!(ledger.results.len(), 3);
                assert!(ledger.best().is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_and_failed_runs_rejected() {
        let b = Bounds::default();
        assert_eq!(classify(&fake(0, 0.0), &b), RejectReason::Degenerate);
        let noisy = FitOutcome { raw_noise: 91, ..fake(6, 0.6) };
        assert_eq!(classify(&noisy, &b), RejectReason::Degenerate);
        let edge = FitOutcome { raw_noise: 90, ..fake(6, 0.6) };
        assert_eq!(classify(&edge, &b), RejectReason::None);
        let r = GridSearchResult::from_fit(tiny_grid().points()[0], Err("boom".into()), &b);
        assert!(!r.accepted);
        assert_eq!(r.reject_reason, RejectReason::Degenerate);
    }

    #[test]
    fn bounds_edges_inclusive() {
        let b = Bounds::default();
        assert_eq!(classify(&fake(5, 0.1), &b), RejectReason::None);
        assert_eq!(classify(&fake(25, 0.1), &b), RejectReason::None);
        assert_eq!(classify(&fake(4, 0.1), &b), RejectReason::TooFew);
        assert_eq!(classify(&fake(26, 0.1), &b), RejectReason::TooMany);
        assert!(Bounds { min_topics: 5, max_topics: 5 }.validate().is_err());
    }

    #[test]
    fn seeds_depend_only_on_reducer_part() {
        let pts = tiny_grid().points();
        assert_eq!(derive_seed(7, &pts[0]), derive_seed(7, &pts[1]));
        assert_ne!(derive_seed(7, &pts[0]), derive_seed(8, &pts[0]));
        let mut other = pts[0];
        other.min_dist = 0.1;
        assert_ne!(derive_seed(7, &pts[0]), derive_seed(7, &other));
    }

    #[test]
    fn ledger_csv_rows() {
        let ledger = run_grid_with(&tiny_grid(), &Bounds::default(), 1, |_| Ok(fake(7, 0.25))).unwrap();
        let csv = ledger.to_csv_string();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().ends_with(",7,0.25,-1,true,NONE"));
    }

    #[test]
    fn result_order_independent_of_jobs() {
        let f = |p: &GridPoint| Ok(fake(p.min_cluster_size, 1.0 / p.min_cluster_size as f64));
        let a = run_grid_with(&ParamGrid::default(), &Bounds::default(), 1, f).unwrap();
        let b = run_grid_with(&ParamGrid::default(), &Bounds::default(), 4, f).unwrap();
        assert_eq!(a, b);
    }
}
