//! Per-dimension descriptor standardization.
//!
//! Statistics use the population convention so the single-atom case
//! degrades to zero variance instead of a division by zero, and the
//! standard deviation is floored at [`EPSILON_STD`] so constant
//! dimensions stay usable.

use crate::error::{Error, Result};
use crate::residual::ResidualDataset;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Floor for per-dimension standard deviation.
pub const EPSILON_STD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerStats {
    /// Identity scaler (mean 0, std 1): standardization disabled.
    pub fn identity(d_desc: usize) -> ScalerStats {
        ScalerStats {
            mean: vec![0.0; d_desc],
            std: vec![1.0; d_desc],
        }
    }

    pub fn d_desc(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::invalid("scaler mean/std length mismatch"));
        }
        if self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("scaler std entries must be strictly positive"));
        }
        Ok(())
    }

    fn check_cols(&self, cols: usize) -> Result<()> {
        if cols != self.d_desc() {
            return Err(Error::invalid(format!(
                "descriptor dimension {} does not match scaler dimension {}",
                cols,
                self.d_desc()
            )));
        }
        Ok(())
    }

    /// (x - mean) / std, elementwise over rows.
    pub fn apply(&self, descriptors: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_cols(descriptors.ncols())?;
        let mut out = descriptors.to_owned();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        Ok(out)
    }

    pub fn apply_vec(&self, descriptor: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_cols(descriptor.len())?;
        Ok(Array1::from_iter(
            descriptor
                .iter()
                .enumerate()
                .map(|(c, v)| (v - self.mean[c]) / self.std[c]),
        ))
    }

    /// Inverse of [`ScalerStats::apply`].
    pub fn unapply(&self, standardized: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_cols(standardized.ncols())?;
        let mut out = standardized.to_owned();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
        Ok(out)
    }
}

/// Fit mean and population standard deviation over every training atom.
pub fn fit_scaler(train: &ResidualDataset) -> Result<ScalerStats> {
    let n = train.total_atoms();
    if n == 0 {
        return Err(Error::invalid("cannot fit a scaler on an empty dataset"));
    }
    let d = train.d_desc;
    let mut mean = vec![0.0; d];
    for record in &train.records {
        for row in record.descriptors.rows() {
            for (c, v) in row.iter().enumerate() {
                mean[c] += v;
            }
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for record in &train.records {
        for row in record.descriptors.rows() {
            for (c, v) in row.iter().enumerate() {
                let dev = v - mean[c];
                var[c] += dev * dev;
            }
        }
    }
    let std = var
        .iter()
        .map(|v| (v / n as f64).sqrt().max(EPSILON_STD))
        .collect();
    Ok(ScalerStats { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::ResidualRecord;
    use ndarray::array;

    fn dataset(rows: Vec<Vec<f64>>) -> ResidualDataset {
        let d = rows[0].len();
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| ResidualRecord {
                structure_id: format!("s{i}"),
                descriptors: Array2::from_shape_vec((1, d), r).unwrap(),
                delta_e: 0.0,
                delta_f: array![[0.0, 0.0, 0.0]],
            })
            .collect();
        ResidualDataset { records, d_desc: d }
    }

    #[test]
    fn hand_formula_two_points() {
        let ds = dataset(vec![vec![0.0], vec![2.0]]);
        let stats = fit_scaler(&ds).unwrap();
        assert_eq!(stats.mean, vec![1.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn constant_dimension_hits_floor() {
        let ds = dataset(vec![vec![3.0, 1.0], vec![3.0, 5.0]]);
        let stats = fit_scaler(&ds).unwrap();
        assert_eq!(stats.mean, vec![3.0, 3.0]);
        assert_eq!(stats.std[0], EPSILON_STD);
        assert_eq!(stats.std[1], 2.0);
    }

    #[test]
    fn standardized_training_set_has_zero_mean() {
        let ds = dataset(vec![
            vec![1.0, -2.0],
            vec![4.0, 0.5],
            vec![-3.0, 9.0],
            vec![0.25, 1.5],
        ]);
        let stats = fit_scaler(&ds).unwrap();
        let z = stats.apply(ds.stacked_descriptors().view()).unwrap();
        for c in 0..2 {
            let mean = z.column(c).sum() / z.nrows() as f64;
            assert!(mean.abs() < 1e-10, "column {c} mean {mean}");
        }
    }

    #[test]
    fn trivial_applications() {
        let stats = ScalerStats {
            mean: vec![1.0, 1.0],
            std: vec![2.0, 2.0],
        };
        let z = stats.apply(array![[3.0, 5.0]].view()).unwrap();
        assert_eq!(z, array![[1.0, 2.0]]);
        let x = stats.apply_vec(array![1.0, 1.0].view()).unwrap();
        assert_eq!(x, array![0.0, 0.0]);
        let id = ScalerStats::identity(2);
        assert_eq!(id.apply(array![[3.0, 5.0]].view()).unwrap(), array![[3.0, 5.0]]);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let stats = ScalerStats::identity(3);
        assert!(stats.apply(array![[1.0, 2.0]].view()).is_err());
    }
}
