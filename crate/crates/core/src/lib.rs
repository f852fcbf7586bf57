//! Topic discovery over short free-text reports: sentence segmentation,
//! embedding, neighbour-graph reduction, density clustering, class-based
//! TF-IDF keywords, coherence-driven grid search, labelling and reporting.

pub mod clusterer;
pub mod coherence;
pub mod config;
pub mod corpus;
pub mod embedder;
pub mod format;
pub mod labeler;
pub mod matrix;
pub mod mock_server;
pub mod pipeline;
pub mod reducer;
pub mod report;
pub mod scalar;
pub mod search;
pub mod synthetic;
pub mod text;
pub mod topics;

pub use clusterer::{ClusterAssignment, ClustererConfig};
pub use config::RunConfig;
pub use corpus::{Corpus, Report, SentenceUnit};
pub use embedder::{EmbedderConfig, EmbeddingMatrix};
pub use matrix::Matrix;
pub use pipeline::{Pipeline, Stage};
pub use reducer::ReducerConfig;
pub use scalar::Scalar;
pub use search::{Bounds, GridLedger, ParamGrid};
pub use topics::{TopicConfig, TopicModel};

/// Double-precision matrix used throughout the pipeline.
pub type Mat = Matrix<f64>;
pub type Knn = reducer::Knn<f64>;
pub type FuzzyGraph = reducer::FuzzyGraph<f64>;
pub type ReducedEmbedding = reducer::ReducedEmbedding<f64>;
pub type CondensedTree = clusterer::CondensedTree<f64>;
pub type MstEdge = clusterer::MstEdge<f64>;
