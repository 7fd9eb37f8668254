//! Relevance prediction for (search term, product) pairs.
//!
//! Products are indexed per field; each pair is scored with Boolean OR/AND counts,
//! BM25 and a two-level smoothed query likelihood, and the resulting features are
//! regressed with an RBF ε-SVR trained by SMO. Word embeddings and paragraph vectors
//! provide similarity-based scorers, and everything is evaluated with RMSE and Pearson
//! correlation under k-fold cross-validation.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below fix the
//! scalar for the common cases.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod features;
pub mod index;
pub mod models;
pub mod scalar;
pub mod stats;
pub mod svr;
pub mod text;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SvrConfigF64 = svr::SvrConfig<f64>;
pub type SvrModelF64 = svr::SvrModel<f64>;
pub type SvrModelF32 = svr::SvrModel<f32>;
pub type EmbeddingTableF32 = embed::EmbeddingTable<f32>;
pub type EmbeddingTableF64 = embed::EmbeddingTable<f64>;
pub type ParagraphVectorsF32 = embed::ParagraphVectors<f32>;
pub type FeatureVectorF64 = features::FeatureVector<f64>;
pub type ExperimentConfigF64 = models::ExperimentConfig<f64>;
pub type TrainedModelF64 = models::TrainedModel<f64>;
