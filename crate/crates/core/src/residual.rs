//! Residual construction: the training set for all descriptor-based scorers.

use crate::dataset::StructureRecord;
use crate::error::{Error, Result};
use ndarray::Array2;

/// Residuals for one structure: descriptors paired with the energy residual
/// (true minus predicted) and the per-atom force residual rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRecord {
    pub structure_id: String,
    /// n_atoms x d_desc.
    pub descriptors: Array2<f64>,
    /// eV.
    pub delta_e: f64,
    /// n_atoms x 3, eV/A.
    pub delta_f: Array2<f64>,
}

impl ResidualRecord {
    pub fn n_atoms(&self) -> usize {
        self.descriptors.nrows()
    }

    /// Euclidean norm of the force residual of atom `j`.
    pub fn force_error_norm(&self, j: usize) -> f64 {
        let row = self.delta_f.row(j);
        (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDataset {
    pub records: Vec<ResidualRecord>,
    pub d_desc: usize,
}

impl ResidualDataset {
    pub fn total_atoms(&self) -> usize {
        self.records.iter().map(ResidualRecord::n_atoms).sum()
    }

    /// All atom descriptors stacked into one (total_atoms x d_desc) matrix,
    /// record order preserved.
    pub fn stacked_descriptors(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.total_atoms(), self.d_desc));
        let mut row = 0;
        for record in &self.records {
            for j in 0..record.n_atoms() {
                out.row_mut(row).assign(&record.descriptors.row(j));
                row += 1;
            }
        }
        out
    }
}

/// Build the residual dataset: delta_e = energy_true - energy_pred and
/// delta_f rows = force_true - force_pred, descriptors carried through.
pub fn compute_residuals(records: &[StructureRecord]) -> Result<ResidualDataset> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("cannot compute residuals of an empty record list"))?;
    let d_desc = first.d_desc();
    let out = records
        .iter()
        .map(|r| ResidualRecord {
            structure_id: r.id.clone(),
            descriptors: r.descriptors.clone(),
            delta_e: r.energy_true - r.energy_pred,
            delta_f: &r.forces_true - &r.forces_pred,
        })
        .collect();
    Ok(ResidualDataset {
        records: out,
        d_desc,
    })
}
