//! Descriptor-based residual learning for uncertainty quantification of
//! machine-learned interatomic potentials.
//!
//! Datasets arrive as JSON lines carrying per-atom descriptors plus true and
//! predicted energies and forces ([`dataset`]). Residuals derived from those
//! records ([`residual`]) feed four small MLP heads that regress either the
//! residual magnitude or the residual itself ([`heads`], [`mlp`], [`train`]),
//! alongside the classic descriptor-space baselines: mean kNN distance,
//! Gaussian-mixture negative log-likelihood, and ensemble disagreement
//! ([`baselines`]). The [`eval`] module implements the evaluation protocol
//! (Spearman error-uncertainty correlation, low/high-error AUC, OOD
//! detection, PCA export), and [`synth`] generates deterministic desk-scale
//! datasets whose error structure makes those evaluations meaningful.

pub mod baselines;
pub mod dataset;
mod error;
pub mod eval;
pub mod fsio;
pub mod heads;
pub mod mlp;
pub mod report;
pub mod residual;
pub mod rng;
pub mod scaler;
pub mod score;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
