//! Structure records and the JSON-lines dataset format.
//!
//! One line per structure. Required keys: `id`, `energy_true`, `energy_pred`,
//! `atoms` (objects with `z`, `descriptor`, `force_true`, `force_pred`).
//! Optional: `split`, `ensemble_energy_preds`, per-atom `ensemble_force_preds`.
//! Descriptors are stored already computed; atomic positions never appear in
//! this format. Files are rejected as a whole on the first invariant
//! violation, with the offending 1-based line number in the error.

use crate::error::{Error, Result};
use crate::fsio::atomic_write;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// One atomic structure: per-atom descriptors plus true and predicted
/// energy and forces, and optionally per-member ensemble predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureRecord {
    pub id: String,
    pub atomic_numbers: Vec<u32>,
    /// n_atoms x d_desc, unitless.
    pub descriptors: Array2<f64>,
    /// eV.
    pub energy_true: f64,
    pub energy_pred: f64,
    /// n_atoms x 3, eV/A.
    pub forces_true: Array2<f64>,
    pub forces_pred: Array2<f64>,
    pub split: Option<String>,
    /// M energies from an ensemble of models, if available.
    pub ensemble_energy_preds: Option<Vec<f64>>,
    /// M matrices of n_atoms x 3, one per ensemble member.
    pub ensemble_force_preds: Option<Vec<Array2<f64>>>,
}

impl StructureRecord {
    pub fn n_atoms(&self) -> usize {
        self.descriptors.nrows()
    }

    pub fn d_desc(&self) -> usize {
        self.descriptors.ncols()
    }

    /// Number of ensemble members, when any ensemble field is present.
    pub fn ensemble_members(&self) -> Option<usize> {
        self.ensemble_energy_preds
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.ensemble_force_preds.as_ref().map(Vec::len))
    }

    /// Internal consistency: shapes, finiteness, ensemble arity.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.n_atoms();
        if n == 0 {
            return Err("structure has no atoms".into());
        }
        if self.d_desc() == 0 {
            return Err("descriptor dimension is zero".into());
        }
        if self.atomic_numbers.len() != n {
            return Err(format!(
                "atomic_numbers length {} != n_atoms {}",
                self.atomic_numbers.len(),
                n
            ));
        }
        if self.atomic_numbers.iter().any(|&z| z == 0) {
            return Err("atomic number must be positive".into());
        }
        for (name, m) in [("force_true", &self.forces_true), ("force_pred", &self.forces_pred)] {
            if m.nrows() != n || m.ncols() != 3 {
                return Err(format!("{name} has shape {:?}, expected {n} x 3", m.dim()));
            }
        }
        if !self.energy_true.is_finite() || !self.energy_pred.is_finite() {
            return Err("non-finite energy".into());
        }
        if self.descriptors.iter().any(|v| !v.is_finite()) {
            return Err("non-finite descriptor value".into());
        }
        if self.forces_true.iter().chain(self.forces_pred.iter()).any(|v| !v.is_finite()) {
            return Err("non-finite force value".into());
        }
        let mut members: Option<usize> = None;
        if let Some(es) = &self.ensemble_energy_preds {
            if es.len() < 2 {
                return Err("ensemble_energy_preds needs at least 2 members".into());
            }
            if es.iter().any(|v| !v.is_finite()) {
                return Err("non-finite ensemble energy".into());
            }
            members = Some(es.len());
        }
        if let Some(fs) = &self.ensemble_force_preds {
            if fs.len() < 2 {
                return Err("ensemble_force_preds needs at least 2 members".into());
            }
            if let Some(m) = members {
                if fs.len() != m {
                    return Err(format!(
                        "ensemble member count mismatch: {} energies vs {} force sets",
                        m,
                        fs.len()
                    ));
                }
            }
            for f in fs {
                if f.nrows() != n || f.ncols() != 3 {
                    return Err(format!(
                        "ensemble force member has shape {:?}, expected {n} x 3",
                        f.dim()
                    ));
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err("non-finite ensemble force value".into());
                }
            }
        }
        Ok(())
    }

    /// Copy with atoms reordered by `perm` (new position i takes old atom
    /// perm[i]). Ensemble force members are permuted alongside.
    pub fn permute_atoms(&self, perm: &[usize]) -> StructureRecord {
        assert_eq!(perm.len(), self.n_atoms());
        let pick = |m: &Array2<f64>| m.select(Axis(0), perm);
        StructureRecord {
            id: self.id.clone(),
            atomic_numbers: perm.iter().map(|&i| self.atomic_numbers[i]).collect(),
            descriptors: pick(&self.descriptors),
            energy_true: self.energy_true,
            energy_pred: self.energy_pred,
            forces_true: pick(&self.forces_true),
            forces_pred: pick(&self.forces_pred),
            split: self.split.clone(),
            ensemble_energy_preds: self.ensemble_energy_preds.clone(),
            ensemble_force_preds: self
                .ensemble_force_preds
                .as_ref()
                .map(|fs| fs.iter().map(&pick).collect()),
        }
    }
}

// Wire representation: field order here fixes the on-disk key order.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAtom {
    z: u32,
    descriptor: Vec<f64>,
    force_true: [f64; 3],
    force_pred: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ensemble_force_preds: Option<Vec<[f64; 3]>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    energy_true: f64,
    energy_pred: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ensemble_energy_preds: Option<Vec<f64>>,
    atoms: Vec<WireAtom>,
}

fn wire_to_record(wire: WireRecord) -> std::result::Result<StructureRecord, String> {
    let n = wire.atoms.len();
    if n == 0 {
        return Err(format!("record '{}' has no atoms", wire.id));
    }
    let d = wire.atoms[0].descriptor.len();
    for (j, atom) in wire.atoms.iter().enumerate() {
        if atom.descriptor.len() != d {
            return Err(format!(
                "record '{}': atom {} has descriptor length {}, atom 0 has {}",
                wire.id,
                j,
                atom.descriptor.len(),
                d
            ));
        }
    }
    let mut descriptors = Array2::zeros((n, d));
    let mut forces_true = Array2::zeros((n, 3));
    let mut forces_pred = Array2::zeros((n, 3));
    let mut atomic_numbers = Vec::with_capacity(n);

    let per_atom_members = wire.atoms[0].ensemble_force_preds.as_ref().map(Vec::len);
    let mut ensemble_forces: Option<Vec<Array2<f64>>> =
        per_atom_members.map(|m| vec![Array2::zeros((n, 3)); m]);

    for (j, atom) in wire.atoms.into_iter().enumerate() {
        atomic_numbers.push(atom.z);
        for (c, v) in atom.descriptor.iter().enumerate() {
            descriptors[[j, c]] = *v;
        }
        for c in 0..3 {
            forces_true[[j, c]] = atom.force_true[c];
            forces_pred[[j, c]] = atom.force_pred[c];
        }
        match (&mut ensemble_forces, atom.ensemble_force_preds) {
            (None, None) => {}
            (Some(members), Some(rows)) if rows.len() == members.len() => {
                for (m, row) in rows.into_iter().enumerate() {
                    for c in 0..3 {
                        members[m][[j, c]] = row[c];
                    }
                }
            }
            _ => {
                return Err(format!(
                    "record '{}': atom {} disagrees with atom 0 on ensemble_force_preds",
                    wire.id, j
                ));
            }
        }
    }

    let record = StructureRecord {
        id: wire.id,
        atomic_numbers,
        descriptors,
        energy_true: wire.energy_true,
        energy_pred: wire.energy_pred,
        forces_true,
        forces_pred,
        split: wire.split,
        ensemble_energy_preds: wire.ensemble_energy_preds,
        ensemble_force_preds: ensemble_forces,
    };
    record.validate()?;
    Ok(record)
}

fn record_to_wire(record: &StructureRecord) -> WireRecord {
    let n = record.n_atoms();
    let atoms = (0..n)
        .map(|j| WireAtom {
            z: record.atomic_numbers[j],
            descriptor: record.descriptors.row(j).to_vec(),
            force_true: [
                record.forces_true[[j, 0]],
                record.forces_true[[j, 1]],
                record.forces_true[[j, 2]],
            ],
            force_pred: [
                record.forces_pred[[j, 0]],
                record.forces_pred[[j, 1]],
                record.forces_pred[[j, 2]],
            ],
            ensemble_force_preds: record.ensemble_force_preds.as_ref().map(|members| {
                members
                    .iter()
                    .map(|f| [f[[j, 0]], f[[j, 1]], f[[j, 2]]])
                    .collect()
            }),
        })
        .collect();
    WireRecord {
        id: record.id.clone(),
        split: record.split.clone(),
        energy_true: record.energy_true,
        energy_pred: record.energy_pred,
        ensemble_energy_preds: record.ensemble_energy_preds.clone(),
        atoms,
    }
}

/// Cross-record checks: shared d_desc, shared ensemble arity/presence.
fn validate_dataset(records: &[StructureRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    let d = first.d_desc();
    let has_e = first.ensemble_energy_preds.is_some();
    let has_f = first.ensemble_force_preds.is_some();
    let members = first.ensemble_members();
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        if r.d_desc() != d {
            return Err(Error::record(
                line,
                format!("descriptor dimension {} differs from line 1 ({})", r.d_desc(), d),
            ));
        }
        if r.ensemble_energy_preds.is_some() != has_e || r.ensemble_force_preds.is_some() != has_f {
            return Err(Error::record(
                line,
                "ensemble fields present on some records but not others".to_string(),
            ));
        }
        if r.ensemble_members() != members {
            return Err(Error::record(
                line,
                format!(
                    "ensemble member count {:?} differs from line 1 ({:?})",
                    r.ensemble_members(),
                    members
                ),
            ));
        }
    }
    Ok(())
}

/// Load a JSONL dataset, rejecting the whole file on any violation.
pub fn load_dataset(path: &Path) -> Result<Vec<StructureRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(&text).map_err(|source| Error::Json {
            line: line_no,
            source,
        })?;
        let record = wire_to_record(wire).map_err(|msg| Error::record(line_no, msg))?;
        records.push(record);
    }
    validate_dataset(&records)?;
    Ok(records)
}

/// Serialize records to JSONL bytes (one line per record, `\n` terminated).
pub fn dataset_to_jsonl(records: &[StructureRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for record in records {
        let wire = record_to_wire(record);
        serde_json::to_writer(&mut out, &wire)
            .map_err(|e| Error::invalid(format!("serialize record '{}': {e}", record.id)))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Write records as a JSONL dataset file (atomic).
pub fn save_dataset(path: &Path, records: &[StructureRecord]) -> Result<()> {
    validate_dataset(records)?;
    atomic_write(path, &dataset_to_jsonl(records)?)
}
