//! Diagonal-covariance Gaussian mixture fitted by expectation-maximization,
//! scored as negative log-likelihood.
//!
//! Initialization is k-means++ seeding (no Lloyd iterations) from a seeded
//! ChaCha8 stream. Responsibilities are computed in log space; covariances
//! are floored at [`COV_FLOOR`] every M-step.

use crate::error::{Error, Result};
use crate::residual::ResidualDataset;
use crate::rng::{self, ChaCha8Rng};
use crate::scaler::{fit_scaler, ScalerStats};
use ndarray::{Array1, Array2, ArrayView1};
use rand_core::SeedableRng;

/// Minimum per-dimension covariance.
pub const COV_FLOOR: f64 = 1e-6;
/// EM stops when mean log-likelihood improves by less than this.
pub const EM_TOL: f64 = 1e-7;
/// Maximum EM iterations.
pub const EM_MAX_ITER: usize = 500;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    /// Mixture weights, summing to 1.
    pub weights: Array1<f64>,
    /// n_components x d_desc.
    pub means: Array2<f64>,
    /// Diagonal covariances, n_components x d_desc, entries >= COV_FLOOR.
    pub covariances: Array2<f64>,
    pub scaler: ScalerStats,
}

/// Per-iteration mean log-likelihood of the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmTrace {
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn d_desc(&self) -> usize {
        self.means.ncols()
    }

    pub fn check(&self) -> Result<()> {
        let k = self.n_components();
        let d = self.d_desc();
        if k == 0 || self.means.nrows() != k || self.covariances.dim() != (k, d) {
            return Err(Error::InvalidModel("mixture shape mismatch".into()));
        }
        if (self.weights.sum() - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidModel("weights must form a simplex".into()));
        }
        if self.covariances.iter().any(|&c| c < COV_FLOOR) {
            return Err(Error::InvalidModel("covariance below floor".into()));
        }
        self.scaler.validate()?;
        if self.scaler.d_desc() != d {
            return Err(Error::InvalidModel("scaler dimension mismatch".into()));
        }
        Ok(())
    }

    /// log w_c + log N(x; mu_c, diag(sigma_c^2)) for every component.
    fn log_component_densities(&self, z: &ArrayView1<f64>) -> Array1<f64> {
        let k = self.n_components();
        let d = self.d_desc();
        let mut out = Array1::zeros(k);
        for c in 0..k {
            let mut log_det = 0.0;
            let mut maha = 0.0;
            for j in 0..d {
                let var = self.covariances[[c, j]];
                let diff = z[j] - self.means[[c, j]];
                log_det += var.ln();
                maha += diff * diff / var;
            }
            out[c] = self.weights[c].ln() - 0.5 * (d as f64 * LN_2PI + log_det + maha);
        }
        out
    }
}

fn log_sum_exp(values: &Array1<f64>) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// k-means++ seeding: the first center uniform, each next one sampled with
/// probability proportional to squared distance from the chosen set.
fn kmeans_pp_centers(data: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let d = data.ncols();
    let mut centers = Array2::zeros((k, d));
    let first = rng::uniform_usize(rng, n);
    centers.row_mut(0).assign(&data.row(first));

    let mut min_sq = vec![0.0; n];
    for (i, row) in data.rows().into_iter().enumerate() {
        let c = centers.row(0);
        min_sq[i] = row
            .iter()
            .zip(c.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
    }
    for next in 1..k {
        let total: f64 = min_sq.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng::uniform01(rng) * total;
            let mut chosen = n - 1;
            for (i, &w) in min_sq.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng::uniform_usize(rng, n)
        };
        centers.row_mut(next).assign(&data.row(idx));
        for (i, row) in data.rows().into_iter().enumerate() {
            let c = centers.row(next);
            let sq: f64 = row
                .iter()
                .zip(c.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if sq < min_sq[i] {
                min_sq[i] = sq;
            }
        }
    }
    centers
}

/// Fit a diagonal GMM on the standardized training atoms.
pub fn gmm_fit(
    train: &ResidualDataset,
    n_components: usize,
    seed: u64,
    standardize: bool,
) -> Result<(GmmModel, GmmTrace)> {
    if n_components == 0 {
        return Err(Error::invalid("n_components must be positive"));
    }
    let n = train.total_atoms();
    if n < n_components {
        return Err(Error::invalid(format!(
            "{n} training atoms cannot support {n_components} components"
        )));
    }
    let scaler = if standardize {
        fit_scaler(train)?
    } else {
        ScalerStats::identity(train.d_desc)
    };
    let data = scaler.apply(train.stacked_descriptors().view())?;
    let d = data.ncols();
    let k = n_components;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeans_pp_centers(&data, k, &mut rng);
    // Uniform weights; every component starts at the global variance.
    let mut global_var = Array1::<f64>::zeros(d);
    let col_mean = data.sum_axis(ndarray::Axis(0)) / n as f64;
    for row in data.rows() {
        for j in 0..d {
            let diff = row[j] - col_mean[j];
            global_var[j] += diff * diff;
        }
    }
    global_var.mapv_inplace(|v| (v / n as f64).max(COV_FLOOR));

    let mut model = GmmModel {
        weights: Array1::from_elem(k, 1.0 / k as f64),
        means,
        covariances: Array2::from_shape_fn((k, d), |(_, j)| global_var[j]),
        scaler,
    };

    let mut trace = GmmTrace {
        log_likelihoods: Vec::new(),
        converged: false,
    };
    let mut resp = Array2::<f64>::zeros((n, k));
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..EM_MAX_ITER {
        // E-step under current parameters, with the data log-likelihood.
        let mut mean_ll = 0.0;
        for (i, row) in data.rows().into_iter().enumerate() {
            let logs = model.log_component_densities(&row);
            let lse = log_sum_exp(&logs);
            mean_ll += lse;
            for c in 0..k {
                resp[[i, c]] = (logs[c] - lse).exp();
            }
        }
        mean_ll /= n as f64;
        trace.log_likelihoods.push(mean_ll);
        if mean_ll - prev_ll < EM_TOL {
            trace.converged = true;
            break;
        }
        prev_ll = mean_ll;

        // M-step.
        for c in 0..k {
            let nk: f64 = resp.column(c).sum();
            let nk_safe = nk.max(1e-300);
            model.weights[c] = nk / n as f64;
            for j in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += resp[[i, c]] * data[[i, j]];
                }
                model.means[[c, j]] = acc / nk_safe;
            }
            for j in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    let diff = data[[i, j]] - model.means[[c, j]];
                    acc += resp[[i, c]] * diff * diff;
                }
                model.covariances[[c, j]] = (acc / nk_safe).max(COV_FLOOR);
            }
        }
    }

    model.check()?;
    Ok((model, trace))
}

/// Negative log-likelihood of a raw descriptor under the mixture.
pub fn gmm_score(model: &GmmModel, descriptor: ArrayView1<f64>) -> Result<f64> {
    let z = model.scaler.apply_vec(descriptor)?;
    Ok(-log_sum_exp(&model.log_component_densities(&z.view())))
}
