//! Minimal feedforward network engine.
//!
//! Affine layers with rectifier hidden activations and an optional
//! elementwise softplus on the output. Forward and backward passes are
//! batched; gradients are exact reverse-mode accumulation of the batch-mean
//! squared error. The optimizer is the adaptive-moment method with the
//! standard constants (0.9, 0.999, 1e-8).
//!
//! Inputs to `forward*` are assumed already standardized; a trained model
//! carries its [`ScalerStats`] so scoring paths can apply it themselves.

use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};
use crate::scaler::ScalerStats;
use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Layer shape of a network. Hidden layers always use the rectifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLayout {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub output_softplus: bool,
}

impl MlpLayout {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::invalid("hidden dimensions must be positive"));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of each affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// Weights, biases and the descriptor scaler of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layout: MlpLayout,
    /// One (fan_out x fan_in) matrix per affine layer.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub scaler: ScalerStats,
}

/// Fresh network: weights uniform in (-b, b) with b = sqrt(6 / fan_in),
/// biases zero, scaler identity. Deterministic in the seed.
pub fn mlp_init(layout: &MlpLayout, seed: u64) -> Result<MlpModel> {
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (fan_in, fan_out) in layout.layer_dims() {
        let bound = (6.0 / fan_in as f64).sqrt();
        let mut data = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out * fan_in {
            data.push(rng::uniform_in(&mut rng, -bound, bound));
        }
        weights.push(Array2::from_shape_vec((fan_out, fan_in), data).expect("shape"));
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpModel {
        layout: layout.clone(),
        weights,
        biases,
        scaler: ScalerStats::identity(layout.input_dim),
    })
}

impl MlpModel {
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Shape chain and finiteness.
    pub fn check(&self) -> Result<()> {
        self.layout.validate()?;
        let dims = self.layout.layer_dims();
        if self.weights.len() != dims.len() || self.biases.len() != dims.len() {
            return Err(Error::invalid("layer count does not match layout"));
        }
        for (l, (fan_in, fan_out)) in dims.iter().enumerate() {
            if self.weights[l].dim() != (*fan_out, *fan_in) || self.biases[l].len() != *fan_out {
                return Err(Error::invalid(format!("layer {l} shape mismatch")));
            }
        }
        if self
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite parameter"));
        }
        if self.scaler.d_desc() != self.layout.input_dim {
            return Err(Error::invalid("scaler dimension does not match input_dim"));
        }
        self.scaler.validate()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.layout.input_dim {
            return Err(Error::invalid(format!(
                "input dimension {} does not match network input {}",
                x.ncols(),
                self.layout.input_dim
            )));
        }
        Ok(())
    }

    /// Per-layer post-activation values: cache[0] is the input, cache.last()
    /// the network output.
    pub(crate) fn forward_cached(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(x)?;
        let last = self.n_layers() - 1;
        let mut cache = Vec::with_capacity(self.n_layers() + 1);
        cache.push(x.to_owned());
        for l in 0..self.n_layers() {
            let mut z = cache[l].dot(&self.weights[l].t()) + &self.biases[l];
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else if self.layout.output_softplus {
                z.mapv_inplace(softplus);
            }
            cache.push(z);
        }
        Ok(cache)
    }

    /// Batched forward pass over standardized inputs (rows).
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.pop().expect("nonempty cache"))
    }

    /// Single standardized input vector.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let row = x
            .to_owned()
            .into_shape_with_order((1, x.len()))
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.forward_batch(&row)?.row(0).to_owned())
    }

    /// Backpropagate `d_out` = dL/d(output) through a cached forward pass.
    pub(crate) fn backward_batch(&self, cache: &[Array2<f64>], mut d_out: Array2<f64>) -> Gradients {
        let mut grads = Gradients::zeros(self);
        let last = self.n_layers() - 1;
        for l in (0..self.n_layers()).rev() {
            let a_out = &cache[l + 1];
            // Post-activation gradient -> pre-activation gradient. Both
            // derivatives are recoverable from the activation output alone:
            // relu'(z) = [a > 0], softplus'(z) = sigmoid(z) = 1 - e^{-a}.
            if l == last {
                if self.layout.output_softplus {
                    Zip::from(&mut d_out)
                        .and(a_out)
                        .for_each(|d, &a| *d *= 1.0 - (-a).exp());
                }
            } else {
                Zip::from(&mut d_out).and(a_out).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            grads.weights[l] = d_out.t().dot(&cache[l]);
            grads.biases[l] = d_out.sum_axis(Axis(0));
            if l > 0 {
                d_out = d_out.dot(&self.weights[l]);
            }
        }
        grads
    }
}

/// Parameter gradients, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros(model: &MlpModel) -> Gradients {
        Gradients {
            weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Exact gradient of the batch-mean squared error
/// `L = mean_b ||f(x_b) - y_b||^2`.
pub fn mlp_gradient(
    model: &MlpModel,
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
) -> Result<(f64, Gradients)> {
    if inputs.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if inputs.nrows() != targets.nrows() || targets.ncols() != model.layout.output_dim {
        return Err(Error::invalid("batch target shape mismatch"));
    }
    let cache = model.forward_cached(inputs)?;
    let out = cache.last().expect("nonempty cache");
    let diff = out - targets;
    let b = inputs.nrows() as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / b;
    let d_out = diff * (2.0 / b);
    Ok((loss, model.backward_batch(&cache, d_out)))
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> AdamState {
        AdamState {
            step: 0,
            m_w: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

/// One bias-corrected adaptive-moment update.
pub fn adam_step(model: &mut MlpModel, state: &mut AdamState, grads: &Gradients, lr: f64) {
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for l in 0..model.weights.len() {
        Zip::from(&mut model.weights[l])
            .and(&mut state.m_w[l])
            .and(&mut state.v_w[l])
            .and(&grads.weights[l])
            .for_each(|p, m, v, &g| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            });
        Zip::from(&mut model.biases[l])
            .and(&mut state.m_b[l])
            .and(&mut state.v_b[l])
            .and(&grads.biases[l])
            .for_each(|p, m, v, &g| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            });
    }
}
