//! Mean distance to the k nearest training descriptors.
//!
//! Exact search over the stored corpus; no approximate index. The k selected
//! distances are summed in ascending order so the score is bit-identical to
//! a full sort.

use crate::error::{Error, Result};
use crate::residual::ResidualDataset;
use crate::scaler::{fit_scaler, ScalerStats};
use ndarray::{Array2, ArrayView1};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    pub k: usize,
    /// Standardized training atom descriptors, one row per atom.
    pub points: Array2<f64>,
    pub scaler: ScalerStats,
}

/// Store the (standardized) training atoms for exact neighbor queries.
pub fn knn_fit(train: &ResidualDataset, k: usize, standardize: bool) -> Result<KnnIndex> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let n = train.total_atoms();
    if k > n {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {n} stored training atoms"
        )));
    }
    let scaler = if standardize {
        fit_scaler(train)?
    } else {
        ScalerStats::identity(train.d_desc)
    };
    let points = scaler.apply(train.stacked_descriptors().view())?;
    Ok(KnnIndex { k, points, scaler })
}

impl KnnIndex {
    pub fn check(&self) -> Result<()> {
        if self.k == 0 || self.k > self.points.nrows() {
            return Err(Error::InvalidModel(format!(
                "k = {} inconsistent with {} stored points",
                self.k,
                self.points.nrows()
            )));
        }
        self.scaler.validate()?;
        if self.scaler.d_desc() != self.points.ncols() {
            return Err(Error::InvalidModel("scaler/point dimension mismatch".into()));
        }
        Ok(())
    }
}

/// Mean Euclidean distance from a raw descriptor to its k nearest stored
/// points, in standardized space.
pub fn knn_score(index: &KnnIndex, descriptor: ArrayView1<f64>) -> Result<f64> {
    let query = index.scaler.apply_vec(descriptor)?;
    let mut distances: Vec<f64> = index
        .points
        .rows()
        .into_iter()
        .map(|p| {
            let mut acc = 0.0;
            for (a, b) in p.iter().zip(query.iter()) {
                let d = a - b;
                acc += d * d;
            }
            acc.sqrt()
        })
        .collect();
    let k = index.k;
    if k < distances.len() {
        distances.select_nth_unstable_by(k - 1, f64::total_cmp);
        distances.truncate(k);
    }
    distances.sort_unstable_by(f64::total_cmp);
    Ok(distances.iter().sum::<f64>() / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::ResidualRecord;
    use ndarray::array;

    fn one_d_dataset(values: &[f64]) -> ResidualDataset {
        let records = values
            .iter()
            .enumerate()
            .map(|(i, &v)| ResidualRecord {
                structure_id: format!("s{i}"),
                descriptors: array![[v]],
                delta_e: 0.0,
                delta_f: array![[0.0, 0.0, 0.0]],
            })
            .collect();
        ResidualDataset {
            records,
            d_desc: 1,
        }
    }

    #[test]
    fn k_equal_to_corpus_is_valid_but_k_plus_one_is_not() {
        let ds = one_d_dataset(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert!(knn_fit(&ds, 10, false).is_ok());
        assert!(knn_fit(&ds, 11, false).is_err());
    }

    #[test]
    fn stored_point_scores_zero_at_k1() {
        let ds = one_d_dataset(&[0.5, 2.0]);
        let index = knn_fit(&ds, 1, false).unwrap();
        assert_eq!(knn_score(&index, array![0.5].view()).unwrap(), 0.0);
    }

    #[test]
    fn midpoint_of_two_points() {
        let ds = one_d_dataset(&[0.0, 2.0]);
        let index = knn_fit(&ds, 2, false).unwrap();
        assert_eq!(knn_score(&index, array![1.0].view()).unwrap(), 1.0);
    }

    #[test]
    fn repeated_fit_gives_identical_scores() {
        let ds = one_d_dataset(&[0.0, 0.3, -1.0, 2.5, 4.0]);
        let a = knn_fit(&ds, 3, true).unwrap();
        let b = knn_fit(&ds, 3, true).unwrap();
        for q in [-2.0, 0.1, 3.3] {
            let qa = knn_score(&a, array![q].view()).unwrap();
            let qb = knn_score(&b, array![q].view()).unwrap();
            assert_eq!(qa, qb);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ds = one_d_dataset(&[0.0, 2.0]);
        let index = knn_fit(&ds, 1, false).unwrap();
        assert!(knn_score(&index, array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn matches_full_sort_brute_force() {
        use crate::rng::{self, ChaCha8Rng};
        use rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = 4;
        let records: Vec<ResidualRecord> = (0..80)
            .map(|i| ResidualRecord {
                structure_id: format!("s{i}"),
                descriptors: Array2::from_shape_fn((1, d), |_| {
                    rng::uniform_in(&mut rng, -2.0, 2.0)
                }),
                delta_e: 0.0,
                delta_f: Array2::zeros((1, 3)),
            })
            .collect();
        let ds = ResidualDataset {
            records,
            d_desc: d,
        };
        let index = knn_fit(&ds, 7, true).unwrap();
        for _ in 0..200 {
            let q = ndarray::Array1::from_shape_fn(d, |_| rng::uniform_in(&mut rng, -3.0, 3.0));
            let fast = knn_score(&index, q.view()).unwrap();
            // Brute force: sort all distances, average the first k.
            let zq = index.scaler.apply_vec(q.view()).unwrap();
            let mut all: Vec<f64> = index
                .points
                .rows()
                .into_iter()
                .map(|p| {
                    p.iter()
                        .zip(zq.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            all.sort_unstable_by(f64::total_cmp);
            let brute = all[..index.k].iter().sum::<f64>() / index.k as f64;
            assert_eq!(fast, brute);
        }
    }
}
