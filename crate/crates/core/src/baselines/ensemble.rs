//! Disagreement over externally supplied prediction sets.
//!
//! Covers both independently trained ensembles and stochastic forward
//! passes: given M predictions per quantity, the uncertainty is their
//! population standard deviation (componentwise for forces, then the norm).

use crate::dataset::StructureRecord;
use crate::error::{Error, Result};

/// Energy and per-atom force disagreement for one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    /// Population std of the member energies, eV.
    pub energy: f64,
    /// Per-atom norm of the componentwise force stds, eV/A.
    pub force: Vec<f64>,
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Spread of the supplied ensemble predictions.
pub fn disagreement_scores(record: &StructureRecord) -> Result<Disagreement> {
    let energies = record.ensemble_energy_preds.as_ref().ok_or_else(|| {
        Error::invalid(format!("record '{}' has no ensemble_energy_preds", record.id))
    })?;
    let forces = record.ensemble_force_preds.as_ref().ok_or_else(|| {
        Error::invalid(format!("record '{}' has no ensemble_force_preds", record.id))
    })?;
    if energies.len() < 2 || forces.len() < 2 {
        return Err(Error::invalid("disagreement needs at least 2 ensemble members"));
    }

    let energy = population_std(energies.iter().copied());
    let force = (0..record.n_atoms())
        .map(|j| {
            let mut acc = 0.0;
            for c in 0..3 {
                let std = population_std(forces.iter().map(|m| m[[j, c]]));
                acc += std * std;
            }
            acc.sqrt()
        })
        .collect();
    Ok(Disagreement { energy, force })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn record(energies: Vec<f64>, members: Vec<Array2<f64>>) -> StructureRecord {
        let n = members[0].nrows();
        StructureRecord {
            id: "r".into(),
            atomic_numbers: vec![1; n],
            descriptors: Array2::zeros((n, 2)),
            energy_true: 0.0,
            energy_pred: 0.0,
            forces_true: Array2::zeros((n, 3)),
            forces_pred: Array2::zeros((n, 3)),
            split: None,
            ensemble_energy_preds: Some(energies),
            ensemble_force_preds: Some(members),
        }
    }

    #[test]
    fn identical_members_give_zero() {
        let m = array![[1.0, 2.0, 3.0]];
        let r = record(vec![5.0, 5.0, 5.0], vec![m.clone(), m.clone(), m]);
        let d = disagreement_scores(&r).unwrap();
        assert_eq!(d.energy, 0.0);
        assert_eq!(d.force, vec![0.0]);
    }

    #[test]
    fn two_member_energy_std() {
        let m = Array2::zeros((1, 3));
        let r = record(vec![0.0, 2.0], vec![m.clone(), m]);
        assert_eq!(disagreement_scores(&r).unwrap().energy, 1.0);
    }

    #[test]
    fn force_component_std_norm() {
        let a = array![[0.0, 0.0, 0.0]];
        let b = array![[2.0, 0.0, 0.0]];
        let r = record(vec![0.0, 0.0], vec![a, b]);
        assert_eq!(disagreement_scores(&r).unwrap().force, vec![1.0]);
    }

    #[test]
    fn member_permutation_invariant() {
        let members = vec![
            array![[0.1, -0.4, 1.0], [0.0, 0.0, 0.0]],
            array![[0.7, 0.2, -1.0], [1.0, 2.0, 3.0]],
            array![[-0.3, 0.5, 0.25], [0.5, -0.5, 0.0]],
        ];
        let r1 = record(vec![1.0, 2.0, 4.0], members.clone());
        let permuted = vec![members[2].clone(), members[0].clone(), members[1].clone()];
        let r2 = record(vec![4.0, 1.0, 2.0], permuted);
        let d1 = disagreement_scores(&r1).unwrap();
        let d2 = disagreement_scores(&r2).unwrap();
        assert!((d1.energy - d2.energy).abs() < 1e-15);
        for (a, b) in d1.force.iter().zip(d2.force.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_fields_error() {
        let mut r = record(vec![0.0, 1.0], vec![Array2::zeros((1, 3)), Array2::zeros((1, 3))]);
        r.ensemble_energy_preds = None;
        assert!(disagreement_scores(&r).is_err());
    }
}
