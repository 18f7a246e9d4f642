//! Evaluation toolkit for embedding compression.
//!
//! The crate fits and applies compression codecs to stored embedding
//! matrices, retrieves exact cosine top-k neighbours over the reconstructed
//! vectors, scores the rankings against graded relevance judgments and tests
//! every compressed variant against the uncompressed baseline with a
//! one-sided Wilcoxon signed-rank test. It also builds nested evaluation
//! corpora from pooled TREC runs.
//!
//! Numeric kernels (cosine scoring, k-means, PCA, percentiles) are generic
//! over [`Scalar`], implemented for `f32` and `f64`. Storage and the codecs
//! work on `f32`, the only on-disk precision.

pub mod codecs;
pub mod corpus_builder;
pub mod embed_store;
pub mod ir_metrics;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod searcher;
pub mod stats;

pub use scalar::Scalar;

/// Row-major matrix with aligned external ids.
pub use embed_store::Matrix;

/// The storage precision: every file on disk holds `f32` values.
pub type EmbeddingMatrix = embed_store::Matrix<f32>;
/// Double-precision matrix, used by tests and analysis code.
pub type EmbeddingMatrix64 = embed_store::Matrix<f64>;

pub type KMeansResult32 = codecs::kmeans::KMeansResult<f32>;
pub type KMeansResult64 = codecs::kmeans::KMeansResult<f64>;

pub use codecs::pca::PcaModel;
pub use codecs::{CodecConfig, EncodedMatrix, FittedCodec, Method};
pub use ir_metrics::{MetricReport, Qrels};
pub use searcher::RankedList;
pub use stats::{PairedSample, TestResult};
