//! The four residual-learning heads.
//!
//! Energy heads regress the structure-level residual through a sum of
//! per-atom network outputs; force heads regress per-atom residuals
//! directly. Norm heads carry a softplus output and predict a magnitude;
//! diff heads predict the signed residual itself and are read as a
//! magnitude when scoring.

use crate::dataset::StructureRecord;
use crate::error::{Error, Result};
use crate::mlp::{mlp_init, MlpLayout, MlpModel};
use crate::residual::ResidualDataset;
use crate::scaler::{fit_scaler, ScalerStats};
use crate::train::{train_loop, AtomSamples, EpochStats, StructureSamples, TrainSchedule};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Structure |dE| via atom-summed softplus head.
    #[serde(rename = "e-norm")]
    ENorm,
    /// Structure dE via atom-summed linear head.
    #[serde(rename = "e-diff")]
    EDiff,
    /// Per-atom ||dF|| via softplus head.
    #[serde(rename = "f-norm")]
    FNorm,
    /// Per-atom dF vector via linear head.
    #[serde(rename = "f-diff")]
    FDiff,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [HeadKind::ENorm, HeadKind::EDiff, HeadKind::FNorm, HeadKind::FDiff];

    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::ENorm => "e-norm",
            HeadKind::EDiff => "e-diff",
            HeadKind::FNorm => "f-norm",
            HeadKind::FDiff => "f-diff",
        }
    }

    pub fn parse(s: &str) -> Result<HeadKind> {
        match s {
            "e-norm" => Ok(HeadKind::ENorm),
            "e-diff" => Ok(HeadKind::EDiff),
            "f-norm" => Ok(HeadKind::FNorm),
            "f-diff" => Ok(HeadKind::FDiff),
            other => Err(Error::invalid(format!(
                "unknown head kind '{other}' (expected e-norm, e-diff, f-norm or f-diff)"
            ))),
        }
    }

    pub fn is_energy(&self) -> bool {
        matches!(self, HeadKind::ENorm | HeadKind::EDiff)
    }

    pub fn output_dim(&self) -> usize {
        match self {
            HeadKind::FDiff => 3,
            _ => 1,
        }
    }

    pub fn output_softplus(&self) -> bool {
        matches!(self, HeadKind::ENorm | HeadKind::FNorm)
    }

    /// Norm heads and the energy diff head use one hidden layer; the force
    /// diff head, whose target is a 3-vector, uses two.
    pub fn hidden_depth(&self) -> usize {
        match self {
            HeadKind::FDiff => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network layout for a head at the given descriptor dimension.
pub fn head_layout(kind: HeadKind, d_desc: usize, hidden_width: usize) -> MlpLayout {
    MlpLayout {
        input_dim: d_desc,
        hidden_dims: vec![hidden_width; kind.hidden_depth()],
        output_dim: kind.output_dim(),
        output_softplus: kind.output_softplus(),
    }
}

/// A trained head: the network plus the head kind that fixes its reading.
#[derive(Debug, Clone, PartialEq)]
pub struct PdrlModel {
    pub kind: HeadKind,
    pub net: MlpModel,
}

impl PdrlModel {
    pub fn check(&self) -> Result<()> {
        self.net.check()?;
        let lay = &self.net.layout;
        if lay.output_dim != self.kind.output_dim() || lay.output_softplus != self.kind.output_softplus() {
            return Err(Error::InvalidModel(format!(
                "network layout inconsistent with head kind {}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Supervised targets for one head, inputs not yet standardized.
#[derive(Debug, Clone)]
pub enum HeadTargets {
    /// One unit per structure; target |dE| or dE.
    Structures(StructureSamples),
    /// One unit per atom; target ||dF_j|| (1 column) or dF_j (3 columns).
    Atoms(AtomSamples),
}

/// Assemble inputs and regression targets for a head.
pub fn build_targets(residuals: &ResidualDataset, kind: HeadKind) -> Result<HeadTargets> {
    if residuals.records.is_empty() {
        return Err(Error::invalid("empty residual dataset"));
    }
    match kind {
        HeadKind::ENorm | HeadKind::EDiff => {
            let structures: Vec<(Array2<f64>, f64)> = residuals
                .records
                .iter()
                .map(|r| {
                    let target = if kind == HeadKind::ENorm {
                        r.delta_e.abs()
                    } else {
                        r.delta_e
                    };
                    (r.descriptors.clone(), target)
                })
                .collect();
            Ok(HeadTargets::Structures(StructureSamples::from_structures(&structures)?))
        }
        HeadKind::FNorm | HeadKind::FDiff => {
            let inputs = residuals.stacked_descriptors();
            let cols = kind.output_dim();
            let mut targets = Array2::zeros((inputs.nrows(), cols));
            let mut row = 0;
            for r in &residuals.records {
                for j in 0..r.n_atoms() {
                    if kind == HeadKind::FNorm {
                        targets[[row, 0]] = r.force_error_norm(j);
                    } else {
                        for c in 0..3 {
                            targets[[row, c]] = r.delta_f[[j, c]];
                        }
                    }
                    row += 1;
                }
            }
            Ok(HeadTargets::Atoms(AtomSamples::new(inputs, targets)?))
        }
    }
}

fn standardize_targets(targets: HeadTargets, scaler: &ScalerStats) -> Result<HeadTargets> {
    Ok(match targets {
        HeadTargets::Structures(mut s) => {
            s.atoms = scaler.apply(s.atoms.view())?;
            HeadTargets::Structures(s)
        }
        HeadTargets::Atoms(mut a) => {
            a.inputs = scaler.apply(a.inputs.view())?;
            HeadTargets::Atoms(a)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdrlOptions {
    pub hidden_width: usize,
    /// Standardize descriptors with statistics from the training split.
    pub standardize: bool,
}

impl Default for PdrlOptions {
    fn default() -> Self {
        PdrlOptions {
            hidden_width: 64,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedHead {
    pub model: PdrlModel,
    pub history: Vec<EpochStats>,
}

/// Train one head. Energy heads batch structures; force heads batch atoms.
/// The descriptor scaler is fitted on the training split and embedded in
/// the returned model, so scoring is self-contained.
pub fn train_pdrl(
    train: &ResidualDataset,
    val: &ResidualDataset,
    kind: HeadKind,
    schedule: &TrainSchedule,
    options: &PdrlOptions,
    seed: u64,
) -> Result<TrainedHead> {
    if train.d_desc != val.d_desc {
        return Err(Error::invalid("train and validation descriptor dimensions differ"));
    }
    if options.hidden_width == 0 {
        return Err(Error::invalid("hidden_width must be positive"));
    }
    let scaler = if options.standardize {
        fit_scaler(train)?
    } else {
        ScalerStats::identity(train.d_desc)
    };
    let train_targets = standardize_targets(build_targets(train, kind)?, &scaler)?;
    let val_targets = standardize_targets(build_targets(val, kind)?, &scaler)?;

    let layout = head_layout(kind, train.d_desc, options.hidden_width);
    let mut net = mlp_init(&layout, seed)?;
    net.scaler = scaler;

    let (net, history) = match (&train_targets, &val_targets) {
        (HeadTargets::Structures(t), HeadTargets::Structures(v)) => {
            train_loop(net, t, v, schedule, seed)?
        }
        (HeadTargets::Atoms(t), HeadTargets::Atoms(v)) => train_loop(net, t, v, schedule, seed)?,
        _ => unreachable!("build_targets is kind-consistent"),
    };

    let model = PdrlModel { kind, net };
    model.check()?;
    Ok(TrainedHead { model, history })
}

/// Structure-level energy uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyScore {
    /// Nonnegative uncertainty, eV.
    pub uncertainty: f64,
    /// Raw atom-summed prediction; differs from `uncertainty` only for the
    /// diff head, where the magnitude is reported as the uncertainty.
    pub signed: Option<f64>,
}

/// Score a structure with an energy head: sum of per-atom outputs.
pub fn score_energy(model: &PdrlModel, record: &StructureRecord) -> Result<EnergyScore> {
    if !model.kind.is_energy() {
        return Err(Error::invalid(format!(
            "score_energy requires an energy head, got {}",
            model.kind
        )));
    }
    let z = model.net.scaler.apply(record.descriptors.view())?;
    let out = model.net.forward_batch(&z)?;
    let sum: f64 = out.column(0).sum();
    Ok(match model.kind {
        HeadKind::ENorm => EnergyScore {
            uncertainty: sum,
            signed: None,
        },
        HeadKind::EDiff => EnergyScore {
            uncertainty: sum.abs(),
            signed: Some(sum),
        },
        _ => unreachable!(),
    })
}

/// Score a structure with a force head: one uncertainty per atom.
pub fn score_forces(model: &PdrlModel, record: &StructureRecord) -> Result<Vec<f64>> {
    if model.kind.is_energy() {
        return Err(Error::invalid(format!(
            "score_forces requires a force head, got {}",
            model.kind
        )));
    }
    let z = model.net.scaler.apply(record.descriptors.view())?;
    let out = model.net.forward_batch(&z)?;
    Ok(match model.kind {
        HeadKind::FNorm => out.column(0).to_vec(),
        HeadKind::FDiff => out
            .rows()
            .into_iter()
            .map(|r| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt())
            .collect(),
        _ => unreachable!(),
    })
}
