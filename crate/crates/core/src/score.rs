//! Saved scorer models (one JSON document each) and batch scoring of
//! datasets into the common score-row schema.
//!
//! PDRL energy heads emit one structure-level row per record; force heads
//! emit one row per atom. kNN and GMM emit a structure-level row (the
//! aggregated per-atom score) followed by the per-atom rows, since those
//! scorers serve both evaluation targets.

use crate::baselines::{disagreement_scores, gmm_score, knn_score, GmmModel, KnnIndex};
use crate::dataset::StructureRecord;
use crate::error::{Error, Result};
use crate::fsio::atomic_write;
use crate::heads::{score_energy, score_forces, HeadKind, PdrlModel};
use crate::mlp::{MlpLayout, MlpModel};
use crate::report::{ScoreRow, UncertaintyReport};
use crate::scaler::ScalerStats;
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

const HIDDEN_ACTIVATION: &str = "relu";
const OPTIMIZER_TAG: &str = "adam(beta1=0.9,beta2=0.999,eps=1e-8)";

/// Structure-level aggregation of per-atom scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Mean,
    Max,
}

impl Aggregate {
    pub fn parse(s: &str) -> Result<Aggregate> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "max" => Ok(Aggregate::Max),
            other => Err(Error::invalid(format!("unknown aggregation '{other}'"))),
        }
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        match self {
            Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_matrix(rows: Vec<Vec<f64>>, what: &str) -> Result<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidModel(format!("{what}: ragged rows")));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| Error::InvalidModel(format!("{what}: {e}")))
}

#[derive(Serialize, Deserialize)]
struct PdrlWire {
    kind: HeadKind,
    hidden_activation: String,
    optimizer: String,
    layout: MlpLayout,
    scaler: ScalerStats,
    /// One flat row-major array per affine layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct KnnWire {
    k: usize,
    scaler: ScalerStats,
    points: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct GmmWire {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<f64>>,
    scaler: ScalerStats,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "lowercase")]
enum SavedModelWire {
    Pdrl(PdrlWire),
    Knn(KnnWire),
    Gmm(GmmWire),
}

/// Any scorer that can be written to and read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Pdrl(PdrlModel),
    Knn(KnnIndex),
    Gmm(GmmModel),
}

impl SavedModel {
    /// Short name for report rows: the head kind, `knn`, or `gmm`.
    pub fn name(&self) -> String {
        match self {
            SavedModel::Pdrl(m) => m.kind.as_str().to_string(),
            SavedModel::Knn(_) => "knn".to_string(),
            SavedModel::Gmm(_) => "gmm".to_string(),
        }
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let wire = match self {
            SavedModel::Pdrl(model) => SavedModelWire::Pdrl(PdrlWire {
                kind: model.kind,
                hidden_activation: HIDDEN_ACTIVATION.to_string(),
                optimizer: OPTIMIZER_TAG.to_string(),
                layout: model.net.layout.clone(),
                scaler: model.net.scaler.clone(),
                weights: model
                    .net
                    .weights
                    .iter()
                    .map(|w| w.iter().copied().collect())
                    .collect(),
                biases: model.net.biases.iter().map(|b| b.to_vec()).collect(),
            }),
            SavedModel::Knn(index) => SavedModelWire::Knn(KnnWire {
                k: index.k,
                scaler: index.scaler.clone(),
                points: matrix_rows(&index.points),
            }),
            SavedModel::Gmm(model) => SavedModelWire::Gmm(GmmWire {
                weights: model.weights.to_vec(),
                means: matrix_rows(&model.means),
                covariances: matrix_rows(&model.covariances),
                scaler: model.scaler.clone(),
            }),
        };
        let mut bytes = serde_json::to_vec(&wire)
            .map_err(|e| Error::InvalidModel(format!("serialize: {e}")))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<SavedModel> {
        let wire: SavedModelWire =
            serde_json::from_slice(bytes).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let model = match wire {
            SavedModelWire::Pdrl(w) => {
                if w.hidden_activation != HIDDEN_ACTIVATION {
                    return Err(Error::InvalidModel(format!(
                        "unsupported hidden activation '{}'",
                        w.hidden_activation
                    )));
                }
                let dims = w.layout.layer_dims();
                if w.weights.len() != dims.len() || w.biases.len() != dims.len() {
                    return Err(Error::InvalidModel("layer count mismatch".into()));
                }
                let mut weights = Vec::with_capacity(dims.len());
                let mut biases = Vec::with_capacity(dims.len());
                for (l, ((fan_in, fan_out), flat)) in dims.iter().zip(w.weights).enumerate() {
                    weights.push(
                        Array2::from_shape_vec((*fan_out, *fan_in), flat)
                            .map_err(|e| Error::InvalidModel(format!("layer {l} weights: {e}")))?,
                    );
                }
                for (l, b) in w.biases.into_iter().enumerate() {
                    if b.len() != dims[l].1 {
                        return Err(Error::InvalidModel(format!("layer {l} bias length")));
                    }
                    biases.push(Array1::from(b));
                }
                let model = PdrlModel {
                    kind: w.kind,
                    net: MlpModel {
                        layout: w.layout,
                        weights,
                        biases,
                        scaler: w.scaler,
                    },
                };
                model.check()?;
                SavedModel::Pdrl(model)
            }
            SavedModelWire::Knn(w) => {
                let index = KnnIndex {
                    k: w.k,
                    points: rows_matrix(w.points, "knn points")?,
                    scaler: w.scaler,
                };
                index.check()?;
                SavedModel::Knn(index)
            }
            SavedModelWire::Gmm(w) => {
                let model = GmmModel {
                    weights: Array1::from(w.weights),
                    means: rows_matrix(w.means, "gmm means")?,
                    covariances: rows_matrix(w.covariances, "gmm covariances")?,
                    scaler: w.scaler,
                };
                model.check()?;
                SavedModel::Gmm(model)
            }
        };
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_json_bytes()?)
    }

    pub fn load(path: &Path) -> Result<SavedModel> {
        SavedModel::from_json_bytes(&std::fs::read(path)?)
    }

    /// Score every record. Rows keep dataset order; scoring is pure per
    /// record, so records are processed in parallel.
    pub fn score_dataset(
        &self,
        records: &[StructureRecord],
        aggregate: Aggregate,
    ) -> Result<UncertaintyReport> {
        let per_record: Result<Vec<Vec<ScoreRow>>> = records
            .par_iter()
            .map(|record| self.score_record(record, aggregate))
            .collect();
        Ok(UncertaintyReport {
            rows: per_record?.into_iter().flatten().collect(),
        })
    }

    fn score_record(&self, record: &StructureRecord, aggregate: Aggregate) -> Result<Vec<ScoreRow>> {
        match self {
            SavedModel::Pdrl(model) if model.kind.is_energy() => {
                let s = score_energy(model, record)?;
                Ok(vec![ScoreRow {
                    structure_id: record.id.clone(),
                    atom_index: -1,
                    score: s.uncertainty,
                    signed_score: s.signed,
                }])
            }
            SavedModel::Pdrl(model) => {
                let scores = score_forces(model, record)?;
                Ok(atom_rows(record, &scores))
            }
            SavedModel::Knn(index) => {
                let scores: Vec<f64> = record
                    .descriptors
                    .rows()
                    .into_iter()
                    .map(|row| knn_score(index, row))
                    .collect::<Result<_>>()?;
                Ok(with_structure_row(record, scores, aggregate))
            }
            SavedModel::Gmm(model) => {
                let scores: Vec<f64> = record
                    .descriptors
                    .rows()
                    .into_iter()
                    .map(|row| gmm_score(model, row))
                    .collect::<Result<_>>()?;
                Ok(with_structure_row(record, scores, aggregate))
            }
        }
    }
}

fn atom_rows(record: &StructureRecord, scores: &[f64]) -> Vec<ScoreRow> {
    scores
        .iter()
        .enumerate()
        .map(|(j, &score)| ScoreRow {
            structure_id: record.id.clone(),
            atom_index: j as i64,
            score,
            signed_score: None,
        })
        .collect()
}

fn with_structure_row(
    record: &StructureRecord,
    scores: Vec<f64>,
    aggregate: Aggregate,
) -> Vec<ScoreRow> {
    let mut rows = Vec::with_capacity(scores.len() + 1);
    rows.push(ScoreRow {
        structure_id: record.id.clone(),
        atom_index: -1,
        score: aggregate.apply(&scores),
        signed_score: None,
    });
    rows.extend(atom_rows(record, &scores));
    rows
}

/// Per-structure (score, force-error) pairs in dataset order, for OOD
/// evaluation. Scores aggregate the per-atom rows when the report has any,
/// falling back to structure-level rows (energy heads); errors aggregate the
/// per-atom force residual norms the same way.
pub fn structure_force_table(
    report: &UncertaintyReport,
    residuals: &crate::residual::ResidualDataset,
    aggregate: Aggregate,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let atom_map = report.atom_map()?;
    let structure_map = report.structure_map()?;
    let use_atoms = report.has_atom_rows();
    let mut scores = Vec::with_capacity(residuals.records.len());
    let mut errors = Vec::with_capacity(residuals.records.len());
    for record in &residuals.records {
        let norms: Vec<f64> = (0..record.n_atoms())
            .map(|j| record.force_error_norm(j))
            .collect();
        errors.push(aggregate.apply(&norms));
        if use_atoms {
            let per_atom: Vec<f64> = (0..record.n_atoms())
                .map(|j| {
                    atom_map
                        .get(&(record.structure_id.as_str(), j))
                        .copied()
                        .ok_or_else(|| {
                            Error::invalid(format!(
                                "no score for atom {} of '{}'",
                                j, record.structure_id
                            ))
                        })
                })
                .collect::<Result<_>>()?;
            scores.push(aggregate.apply(&per_atom));
        } else {
            let row = structure_map
                .get(record.structure_id.as_str())
                .ok_or_else(|| {
                    Error::invalid(format!("no score for structure '{}'", record.structure_id))
                })?;
            scores.push(row.score);
        }
    }
    Ok((scores, errors))
}

/// Disagreement scores for a dataset with ensemble predictions: one energy
/// row and per-atom force rows per record.
pub fn ensemble_report(records: &[StructureRecord]) -> Result<UncertaintyReport> {
    let per_record: Result<Vec<Vec<ScoreRow>>> = records
        .par_iter()
        .map(|record| {
            let d = disagreement_scores(record)?;
            let mut rows = Vec::with_capacity(d.force.len() + 1);
            rows.push(ScoreRow {
                structure_id: record.id.clone(),
                atom_index: -1,
                score: d.energy,
                signed_score: None,
            });
            rows.extend(atom_rows(record, &d.force));
            Ok(rows)
        })
        .collect();
    Ok(UncertaintyReport {
        rows: per_record?.into_iter().flatten().collect(),
    })
}
