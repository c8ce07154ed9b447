//! Principal-component export of descriptor space.
//!
//! Axes come from the eigendecomposition of the covariance of the
//! standardized training atoms, eigenvalues descending and floored at zero.
//! Each axis is oriented so its largest-magnitude loading is positive, which
//! pins the otherwise arbitrary eigenvector signs.

use crate::error::{Error, Result};
use crate::report::PcaRow;
use crate::residual::ResidualDataset;
use crate::scaler::{fit_scaler, ScalerStats};
use ndarray::Array2;
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// d_desc x n_components, columns are the principal axes.
    pub axes: Array2<f64>,
    /// Descending, one per retained axis.
    pub eigenvalues: Vec<f64>,
    pub scaler: ScalerStats,
}

/// Fit principal axes on the training atoms.
pub fn pca_fit(train: &ResidualDataset, n_components: usize) -> Result<PcaProjection> {
    let d = train.d_desc;
    if n_components == 0 || n_components > d {
        return Err(Error::invalid(format!(
            "n_components must lie in 1..={d}, got {n_components}"
        )));
    }
    if train.total_atoms() < 2 {
        return Err(Error::invalid("pca needs at least 2 training atoms"));
    }
    let scaler = fit_scaler(train)?;
    let z = scaler.apply(train.stacked_descriptors().view())?;
    let n = z.nrows() as f64;

    // Population covariance of the standardized atoms.
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for row in z.rows() {
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eigen = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut axes = Array2::zeros((d, n_components));
    let mut eigenvalues = Vec::with_capacity(n_components);
    for (col, &idx) in order.iter().take(n_components).enumerate() {
        eigenvalues.push(eigen.eigenvalues[idx].max(0.0));
        let v = eigen.eigenvectors.column(idx);
        // Orient: largest-magnitude loading positive.
        let mut top = 0;
        for i in 1..d {
            if v[i].abs() > v[top].abs() {
                top = i;
            }
        }
        let sign = if v[top] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            axes[[i, col]] = sign * v[i];
        }
    }
    Ok(PcaProjection {
        axes,
        eigenvalues,
        scaler,
    })
}

impl PcaProjection {
    pub fn n_components(&self) -> usize {
        self.axes.ncols()
    }

    /// Project a set's atoms; `uncertainty` keys are (structure_id, atom).
    pub fn project_rows(
        &self,
        set_name: &str,
        dataset: &ResidualDataset,
        uncertainty: Option<&HashMap<(&str, usize), f64>>,
    ) -> Result<Vec<PcaRow>> {
        let mut rows = Vec::with_capacity(dataset.total_atoms());
        for record in &dataset.records {
            let z = self.scaler.apply(record.descriptors.view())?;
            let projected = z.dot(&self.axes);
            for j in 0..record.n_atoms() {
                rows.push(PcaRow {
                    set: set_name.to_string(),
                    structure_id: record.structure_id.clone(),
                    atom_index: j,
                    components: projected.row(j).to_vec(),
                    force_error_norm: record.force_error_norm(j),
                    uncertainty: uncertainty
                        .and_then(|m| m.get(&(record.structure_id.as_str(), j)).copied()),
                });
            }
        }
        Ok(rows)
    }
}

/// Fit on `train` and project it plus every named extra set.
pub fn pca_project(
    train: &ResidualDataset,
    train_name: &str,
    others: &[(String, &ResidualDataset)],
    n_components: usize,
    uncertainty: Option<&HashMap<(&str, usize), f64>>,
) -> Result<(PcaProjection, Vec<PcaRow>)> {
    let projection = pca_fit(train, n_components)?;
    let mut rows = projection.project_rows(train_name, train, uncertainty)?;
    for (name, ds) in others {
        if ds.d_desc != train.d_desc {
            return Err(Error::invalid(format!(
                "set '{name}' descriptor dimension {} differs from train ({})",
                ds.d_desc, train.d_desc
            )));
        }
        rows.extend(projection.project_rows(name, ds, uncertainty)?);
    }
    Ok((projection, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::ResidualRecord;
    use crate::rng::{self, ChaCha8Rng};
    use rand_core::SeedableRng;

    fn dataset_from_rows(rows: Array2<f64>) -> ResidualDataset {
        let d = rows.ncols();
        let records = vec![ResidualRecord {
            structure_id: "s".into(),
            descriptors: rows.clone(),
            delta_e: 0.0,
            delta_f: Array2::zeros((rows.nrows(), 3)),
        }];
        ResidualDataset {
            records,
            d_desc: d,
        }
    }

    fn random_dataset(seed: u64, n: usize, d: usize) -> ResidualDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = Array2::from_shape_fn((n, d), |(_, c)| {
            (c as f64 + 1.0) * rng::standard_normal(&mut rng)
        });
        dataset_from_rows(rows)
    }

    #[test]
    fn line_data_concentrates_in_first_axis() {
        // Points on a 1-D line embedded in 4 dimensions.
        let rows = Array2::from_shape_fn((50, 4), |(i, c)| (i as f64) * (c as f64 + 1.0));
        let ds = dataset_from_rows(rows);
        let p = pca_fit(&ds, 4).unwrap();
        let total: f64 = p.eigenvalues.iter().sum();
        assert!(p.eigenvalues[0] / total >= 0.9999);
    }

    #[test]
    fn axes_are_orthonormal_and_eigenvalues_descend() {
        let ds = random_dataset(0, 300, 6);
        let p = pca_fit(&ds, 6).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let dot = p.axes.column(a).dot(&p.axes.column(b));
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10, "axes {a},{b}: {dot}");
            }
        }
        for w in p.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn projected_training_components_are_uncorrelated() {
        let ds = random_dataset(1, 400, 5);
        let p = pca_fit(&ds, 5).unwrap();
        let rows = p.project_rows("train", &ds, None).unwrap();
        let n = rows.len();
        for a in 0..5 {
            for b in (a + 1)..5 {
                let xa: Vec<f64> = rows.iter().map(|r| r.components[a]).collect();
                let xb: Vec<f64> = rows.iter().map(|r| r.components[b]).collect();
                let ma = xa.iter().sum::<f64>() / n as f64;
                let mb = xb.iter().sum::<f64>() / n as f64;
                let mut cov = 0.0;
                let mut va = 0.0;
                let mut vb = 0.0;
                for i in 0..n {
                    cov += (xa[i] - ma) * (xb[i] - mb);
                    va += (xa[i] - ma) * (xa[i] - ma);
                    vb += (xb[i] - mb) * (xb[i] - mb);
                }
                let r = cov / (va * vb).sqrt();
                assert!(r.abs() < 1e-8, "components {a},{b} correlate: {r}");
            }
        }
    }

    #[test]
    fn full_component_reconstruction_is_exact() {
        let ds = random_dataset(2, 200, 4);
        let p = pca_fit(&ds, 4).unwrap();
        let z = p.scaler.apply(ds.stacked_descriptors().view()).unwrap();
        let projected = z.dot(&p.axes);
        let reconstructed = projected.dot(&p.axes.t());
        let max_err = (&z - &reconstructed)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_err < 1e-8, "max reconstruction error {max_err}");
    }

    #[test]
    fn sign_convention_pins_axes() {
        let ds = random_dataset(3, 100, 3);
        let p = pca_fit(&ds, 3).unwrap();
        for c in 0..3 {
            let col = p.axes.column(c);
            let mut top = 0;
            for i in 1..col.len() {
                if col[i].abs() > col[top].abs() {
                    top = i;
                }
            }
            assert!(col[top] > 0.0);
        }
    }

    #[test]
    fn bad_component_counts_rejected() {
        let ds = random_dataset(4, 20, 3);
        assert!(pca_fit(&ds, 0).is_err());
        assert!(pca_fit(&ds, 4).is_err());
    }
}
