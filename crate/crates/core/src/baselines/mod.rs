//! Comparison scorers: kNN descriptor distance, Gaussian mixture negative
//! log-likelihood, and disagreement over supplied ensemble predictions.
//!
//! kNN and GMM score individual atoms and do not distinguish energy from
//! force uncertainty; structure-level scores are an aggregation of the
//! per-atom ones.

mod ensemble;
mod gmm;
mod knn;

pub use ensemble::{disagreement_scores, Disagreement};
pub use gmm::{gmm_fit, gmm_score, GmmModel, GmmTrace, COV_FLOOR};
pub use knn::{knn_fit, knn_score, KnnIndex};
