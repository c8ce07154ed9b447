//! Training loop: seeded shuffling, patience-based learning-rate halving,
//! early stopping, best-checkpoint return.
//!
//! The loop is generic over the batch unit. Per-atom regression treats every
//! atom as one unit; the energy heads treat a whole structure as one unit,
//! with the loss applied to the sum of the network outputs over that
//! structure's atoms.

use crate::error::{Error, Result};
use crate::mlp::{adam_step, mlp_gradient, AdamState, Gradients, MlpModel};
use crate::rng::{self, ChaCha8Rng};
use ndarray::{Array1, Array2, Axis};
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

/// Validation must improve by at least this much to reset patience.
pub const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub initial_lr: f64,
    /// Consecutive non-improving epochs before the learning rate drops.
    pub patience: usize,
    pub lr_decay: f64,
    pub min_lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            initial_lr: 1e-3,
            patience: 10,
            lr_decay: 0.5,
            min_lr: 1e-7,
            max_epochs: 1000,
            batch_size: 64,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::invalid("lr_decay must lie in (0, 1)"));
        }
        if !(self.min_lr < self.initial_lr) || self.initial_lr <= 0.0 {
            return Err(Error::invalid("need 0 < min_lr < initial_lr"));
        }
        if self.patience == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("patience, max_epochs, batch_size must be positive"));
        }
        Ok(())
    }
}

/// One history row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
}

/// A supervised set with a fixed batch unit.
pub trait SupervisedSet {
    fn n_units(&self) -> usize;
    /// Batch-mean loss over the given units plus its parameter gradient.
    fn batch_loss_grad(&self, model: &MlpModel, units: &[usize]) -> Result<(f64, Gradients)>;
    /// Mean loss over all units.
    fn mean_loss(&self, model: &MlpModel) -> Result<f64>;
}

/// Per-atom regression: one unit per input row, squared-error loss per row.
#[derive(Debug, Clone)]
pub struct AtomSamples {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl AtomSamples {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<AtomSamples> {
        if inputs.nrows() == 0 {
            return Err(Error::invalid("empty sample set"));
        }
        if inputs.nrows() != targets.nrows() {
            return Err(Error::invalid("inputs and targets row counts differ"));
        }
        Ok(AtomSamples { inputs, targets })
    }
}

impl SupervisedSet for AtomSamples {
    fn n_units(&self) -> usize {
        self.inputs.nrows()
    }

    fn batch_loss_grad(&self, model: &MlpModel, units: &[usize]) -> Result<(f64, Gradients)> {
        let x = self.inputs.select(Axis(0), units);
        let y = self.targets.select(Axis(0), units);
        mlp_gradient(model, &x, &y)
    }

    fn mean_loss(&self, model: &MlpModel) -> Result<f64> {
        let out = model.forward_batch(&self.inputs)?;
        let diff = &out - &self.targets;
        Ok(diff.iter().map(|d| d * d).sum::<f64>() / self.n_units() as f64)
    }
}

/// Structure-sum regression: one unit per structure; the scalar network is
/// summed over the structure's atoms before the squared error.
#[derive(Debug, Clone)]
pub struct StructureSamples {
    /// All atoms of all structures, stacked.
    pub atoms: Array2<f64>,
    /// Row ranges: structure `s` owns rows `offsets[s]..offsets[s + 1]`.
    pub offsets: Vec<usize>,
    pub targets: Vec<f64>,
}

impl StructureSamples {
    pub fn new(atoms: Array2<f64>, offsets: Vec<usize>, targets: Vec<f64>) -> Result<StructureSamples> {
        if targets.is_empty() {
            return Err(Error::invalid("empty structure set"));
        }
        if offsets.len() != targets.len() + 1
            || offsets[0] != 0
            || *offsets.last().unwrap() != atoms.nrows()
            || offsets.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid("structure offsets are inconsistent"));
        }
        Ok(StructureSamples {
            atoms,
            offsets,
            targets,
        })
    }

    pub fn from_structures(structures: &[(Array2<f64>, f64)]) -> Result<StructureSamples> {
        let total: usize = structures.iter().map(|(m, _)| m.nrows()).sum();
        let d = structures
            .first()
            .ok_or_else(|| Error::invalid("empty structure set"))?
            .0
            .ncols();
        let mut atoms = Array2::zeros((total, d));
        let mut offsets = Vec::with_capacity(structures.len() + 1);
        let mut targets = Vec::with_capacity(structures.len());
        let mut row = 0;
        offsets.push(0);
        for (m, t) in structures {
            atoms.slice_mut(ndarray::s![row..row + m.nrows(), ..]).assign(m);
            row += m.nrows();
            offsets.push(row);
            targets.push(*t);
        }
        StructureSamples::new(atoms, offsets, targets)
    }

    fn structure_rows(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }
}

impl SupervisedSet for StructureSamples {
    fn n_units(&self) -> usize {
        self.targets.len()
    }

    fn batch_loss_grad(&self, model: &MlpModel, units: &[usize]) -> Result<(f64, Gradients)> {
        if model.layout.output_dim != 1 {
            return Err(Error::invalid("structure-sum loss requires a scalar head"));
        }
        if units.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let rows: Vec<usize> = units.iter().flat_map(|&s| self.structure_rows(s)).collect();
        let x = self.atoms.select(Axis(0), &rows);
        let cache = model.forward_cached(&x)?;
        let out = cache.last().expect("nonempty cache");

        let b = units.len() as f64;
        let mut loss = 0.0;
        let mut d_out = Array2::zeros((x.nrows(), 1));
        let mut cursor = 0;
        for &s in units {
            let n = self.structure_rows(s).len();
            let sum: f64 = out.slice(ndarray::s![cursor..cursor + n, 0]).sum();
            let diff = sum - self.targets[s];
            loss += diff * diff;
            // The loss sees only the atom sum, so every atom row of the
            // structure carries the same output gradient.
            let grad = 2.0 * diff / b;
            d_out
                .slice_mut(ndarray::s![cursor..cursor + n, 0])
                .fill(grad);
            cursor += n;
        }
        loss /= b;
        Ok((loss, model.backward_batch(&cache, d_out)))
    }

    fn mean_loss(&self, model: &MlpModel) -> Result<f64> {
        if model.layout.output_dim != 1 {
            return Err(Error::invalid("structure-sum loss requires a scalar head"));
        }
        let out = model.forward_batch(&self.atoms)?;
        let mut loss = 0.0;
        for s in 0..self.n_units() {
            let sum: f64 = out.slice(ndarray::s![self.structure_rows(s), 0]).sum();
            let diff = sum - self.targets[s];
            loss += diff * diff;
        }
        Ok(loss / self.n_units() as f64)
    }
}

/// Run the schedule: shuffled seeded epochs, adaptive-moment updates,
/// halving on stalled validation, best-checkpoint return.
pub fn train_loop<S: SupervisedSet, V: SupervisedSet>(
    mut model: MlpModel,
    train: &S,
    val: &V,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(MlpModel, Vec<EpochStats>)> {
    schedule.validate()?;
    model.check()?;
    if train.n_units() == 0 || val.n_units() == 0 {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = AdamState::new(&model);
    let mut lr = schedule.initial_lr;
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<(Vec<Array2<f64>>, Vec<Array1<f64>>)> = None;
    let mut stale_epochs = 0usize;
    let mut history = Vec::new();
    let mut indices: Vec<usize> = (0..train.n_units()).collect();

    for epoch in 1..=schedule.max_epochs {
        rng::shuffle(&mut rng, &mut indices);
        let mut weighted_loss = 0.0;
        for batch in indices.chunks(schedule.batch_size) {
            let (loss, grads) = train.batch_loss_grad(&model, batch)?;
            adam_step(&mut model, &mut adam, &grads, lr);
            weighted_loss += loss * batch.len() as f64;
        }
        let train_mse = weighted_loss / train.n_units() as f64;
        let val_mse = val.mean_loss(&model)?;
        history.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
            lr,
        });

        if val_mse < best_val - IMPROVEMENT_EPS {
            best_val = val_mse;
            best_params = Some((model.weights.clone(), model.biases.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= schedule.patience {
                lr *= schedule.lr_decay;
                stale_epochs = 0;
                if lr < schedule.min_lr {
                    break;
                }
            }
        }
    }

    if let Some((weights, biases)) = best_params {
        model.weights = weights;
        model.biases = biases;
    }
    Ok((model, history))
}
