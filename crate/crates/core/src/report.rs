//! Score and evaluation report schemas and their CSV/JSON encodings.
//!
//! Score CSV columns: `structure_id,atom_index,score,signed_score`, where
//! atom_index -1 marks a structure-level row and signed_score is empty for
//! everything except the energy deviation head. Evaluation CSV columns:
//! `scorer,target,metric,split,value,n`.

use crate::error::{Error, Result};
use crate::fsio::atomic_write;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub structure_id: String,
    /// -1 for a structure-level row, otherwise the 0-based atom index.
    pub atom_index: i64,
    pub score: f64,
    pub signed_score: Option<f64>,
}

/// Per-structure and per-atom uncertainty scores in a common schema.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UncertaintyReport {
    pub rows: Vec<ScoreRow>,
}

impl UncertaintyReport {
    pub fn structure_rows(&self) -> impl Iterator<Item = &ScoreRow> {
        self.rows.iter().filter(|r| r.atom_index < 0)
    }

    pub fn atom_rows(&self) -> impl Iterator<Item = &ScoreRow> {
        self.rows.iter().filter(|r| r.atom_index >= 0)
    }

    pub fn has_atom_rows(&self) -> bool {
        self.atom_rows().next().is_some()
    }

    pub fn has_structure_rows(&self) -> bool {
        self.structure_rows().next().is_some()
    }

    /// Structure-level rows keyed by id; duplicate ids are an error.
    pub fn structure_map(&self) -> Result<HashMap<&str, &ScoreRow>> {
        let mut map = HashMap::new();
        for row in self.structure_rows() {
            if map.insert(row.structure_id.as_str(), row).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate structure-level score for '{}'",
                    row.structure_id
                )));
            }
        }
        Ok(map)
    }

    /// Atom rows keyed by (id, atom index); duplicates are an error.
    pub fn atom_map(&self) -> Result<HashMap<(&str, usize), f64>> {
        let mut map = HashMap::new();
        for row in self.atom_rows() {
            let key = (row.structure_id.as_str(), row.atom_index as usize);
            if map.insert(key, row.score).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate score for atom {} of '{}'",
                    row.atom_index, row.structure_id
                )));
            }
        }
        Ok(map)
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            writer
                .serialize(row)
                .map_err(|e| Error::invalid(format!("write score row: {e}")))?;
        }
        writer
            .into_inner()
            .map_err(|e| Error::invalid(format!("flush score csv: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_csv_bytes()?)
    }

    pub fn read_csv(path: &Path) -> Result<UncertaintyReport> {
        let mut reader = csv::Reader::from_path(path).map_err(csv_io_error)?;
        let mut rows = Vec::new();
        for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
            let row = row.map_err(|e| Error::invalid(format!("scores line {}: {e}", i + 2)))?;
            if !row.score.is_finite() {
                return Err(Error::invalid(format!("scores line {}: non-finite score", i + 2)));
            }
            rows.push(row);
        }
        Ok(UncertaintyReport { rows })
    }
}

fn csv_io_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Energy,
    Force,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Energy => "energy",
            Target::Force => "force",
        }
    }

    pub fn parse(s: &str) -> Result<Target> {
        match s {
            "energy" => Ok(Target::Energy),
            "force" => Ok(Target::Force),
            other => Err(Error::invalid(format!("unknown target '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Spearman,
    Auc,
}

/// One evaluation number: a (scorer, target, metric, split) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: String,
    pub target: Target,
    pub metric: Metric,
    pub split: String,
    pub value: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.metric {
            Metric::Spearman => (-1.0..=1.0).contains(&self.value) && self.n >= 2,
            Metric::Auc => (0.0..=1.0).contains(&self.value) && self.n >= 2,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "inconsistent eval report: {:?} value {} with n {}",
                self.metric, self.value, self.n
            )));
        }
        Ok(())
    }
}

pub fn eval_reports_to_csv_bytes(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for report in reports {
        writer
            .serialize(report)
            .map_err(|e| Error::invalid(format!("write eval report: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("flush eval csv: {e}")))
}

pub fn eval_reports_to_json_bytes(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(reports)
        .map_err(|e| Error::invalid(format!("serialize eval reports: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// One projected atom for the PCA export.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaRow {
    pub set: String,
    pub structure_id: String,
    pub atom_index: usize,
    pub components: Vec<f64>,
    pub force_error_norm: f64,
    pub uncertainty: Option<f64>,
}

/// CSV with header `set,structure_id,atom_index,pc1..pcK,force_error_norm,uncertainty`.
pub fn pca_rows_to_csv_bytes(rows: &[PcaRow], n_components: usize) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["set".to_string(), "structure_id".into(), "atom_index".into()];
    for c in 0..n_components {
        header.push(format!("pc{}", c + 1));
    }
    header.push("force_error_norm".into());
    header.push("uncertainty".into());
    writer
        .write_record(&header)
        .map_err(|e| Error::invalid(format!("write pca header: {e}")))?;
    for row in rows {
        if row.components.len() != n_components {
            return Err(Error::invalid("pca row component count mismatch"));
        }
        let mut record = vec![
            row.set.clone(),
            row.structure_id.clone(),
            row.atom_index.to_string(),
        ];
        record.extend(row.components.iter().map(|&v| ryu_format(v)));
        record.push(ryu_format(row.force_error_norm));
        record.push(row.uncertainty.map(ryu_format).unwrap_or_default());
        writer
            .write_record(&record)
            .map_err(|e| Error::invalid(format!("write pca row: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("flush pca csv: {e}")))
}

// Shortest round-trip float formatting, matching what the csv crate emits
// for serialized f64 fields.
fn ryu_format(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn score_csv_round_trips_with_empty_signed() {
        let report = UncertaintyReport {
            rows: vec![
                ScoreRow {
                    structure_id: "a".into(),
                    atom_index: -1,
                    score: 0.125,
                    signed_score: Some(-0.125),
                },
                ScoreRow {
                    structure_id: "a".into(),
                    atom_index: 0,
                    score: 1.5,
                    signed_score: None,
                },
            ],
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("structure_id,atom_index,score,signed_score\n"));
        assert!(text.contains("a,0,1.5,\n"));
        let back = UncertaintyReport::read_csv(&path).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn duplicate_rows_are_rejected_by_maps() {
        let report = UncertaintyReport {
            rows: vec![
                ScoreRow {
                    structure_id: "a".into(),
                    atom_index: 2,
                    score: 1.0,
                    signed_score: None,
                },
                ScoreRow {
                    structure_id: "a".into(),
                    atom_index: 2,
                    score: 2.0,
                    signed_score: None,
                },
            ],
        };
        assert!(report.atom_map().is_err());
        assert!(report.structure_map().unwrap().is_empty());
    }

    #[test]
    fn eval_csv_schema() {
        let reports = vec![EvalReport {
            scorer: "f-norm".into(),
            target: Target::Force,
            metric: Metric::Spearman,
            split: "test".into(),
            value: 0.75,
            n: 100,
        }];
        let bytes = eval_reports_to_csv_bytes(&reports).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text, "scorer,target,metric,split,value,n\nf-norm,force,spearman,test,0.75,100\n");
        let json: serde_json::Value =
            serde_json::from_slice(&eval_reports_to_json_bytes(&reports).unwrap()).unwrap();
        assert_eq!(json[0]["metric"], "spearman");
    }

    #[test]
    fn pca_csv_header_and_empty_uncertainty() {
        let rows = vec![PcaRow {
            set: "train".into(),
            structure_id: "s0".into(),
            atom_index: 3,
            components: vec![0.5, -1.0],
            force_error_norm: 0.25,
            uncertainty: None,
        }];
        let text = String::from_utf8(pca_rows_to_csv_bytes(&rows, 2).unwrap()).unwrap();
        assert!(text.starts_with("set,structure_id,atom_index,pc1,pc2,force_error_norm,uncertainty\n"));
        assert!(text.contains("train,s0,3,0.5,-1.0,0.25,\n"));
    }
}
