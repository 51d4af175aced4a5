//! Uncertainty and out-of-distribution scores: maximum softmax probability
//! (raw and temperature-scaled), MC-dropout entropy, ensemble disagreement,
//! energy and Mahalanobis distance, plus per-sample score tables.
//!
//! Every detector score is oriented so that higher means more
//! out-of-distribution; for the probability columns that is `1 − msp`.

mod mahalanobis;
mod scores;
mod table;
mod temperature;

pub use mahalanobis::{fit_mahalanobis, fit_mahalanobis_with, mahalanobis_distance, MahalanobisParams, SHRINKAGE};
pub use scores::{
    energy_score, ensemble_disagreement, entropy, mc_dropout_entropy, mc_dropout_passes, mc_entropy_from_passes, msp,
    PassProbs, MC_CHUNK, NORMALIZATION_TOLERANCE,
};
pub use table::{
    build_score_table, pooled_features, FeatureSpace, ScoreKind, ScoreRow, ScoreSources, ScoreTable, SCORE_HEADER,
};
pub use temperature::{fit_temperature, mean_nll, scale_logits, TemperatureParam, TEMPERATURE_RANGE};

use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum UqError {
    #[error("probabilities sum to {sum}, not 1")]
    NotADistribution { sum: f64 },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("temperature fitting needs at least two distinct labels")]
    Degenerate,
    #[error("ensemble disagreement needs at least two members, got {0}")]
    TooFewMembers(usize),
    #[error("class {class} has {count} samples; at least 2 are required")]
    TooFewSamples { class: usize, count: usize },
    #[error("covariance is not positive definite (pivot {pivot})")]
    Factorization { pivot: usize },
    #[error("missing fitted artifact: {0}")]
    MissingArtifact(&'static str),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid setting: {0}")]
    Config(String),
    #[error("malformed score table: {0}")]
    Csv(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
