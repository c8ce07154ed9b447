//! Evaluation protocol: error-uncertainty Spearman correlation, low/high
//! error AUC, out-of-distribution detection, and PCA export.

mod metrics;
mod pca;

pub use metrics::{average_ranks, error_split, roc_auc, spearman};
pub use pca::{pca_fit, pca_project, PcaProjection};

use crate::error::{Error, Result};
use crate::report::{EvalReport, Metric, Target, UncertaintyReport};
use crate::residual::ResidualDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdEvalOptions {
    /// Quantile defining the low-error class for the AUC split.
    pub low_quantile: f64,
    /// Aggregate force pairs per structure (mean) instead of per atom.
    pub per_structure_force: bool,
}

impl Default for IdEvalOptions {
    fn default() -> Self {
        IdEvalOptions {
            low_quantile: 0.2,
            per_structure_force: false,
        }
    }
}

fn spearman_and_auc(
    scorer: &str,
    target: Target,
    split: &str,
    errors: &[f64],
    scores: &[f64],
    low_quantile: f64,
) -> Result<Vec<EvalReport>> {
    let rho = spearman(errors, scores)?;
    let labels = error_split(errors, low_quantile)?;
    let auc = roc_auc(scores, &labels)?;
    let reports = vec![
        EvalReport {
            scorer: scorer.to_string(),
            target,
            metric: Metric::Spearman,
            split: split.to_string(),
            value: rho,
            n: errors.len(),
        },
        EvalReport {
            scorer: scorer.to_string(),
            target,
            metric: Metric::Auc,
            split: split.to_string(),
            value: auc,
            n: errors.len(),
        },
    ];
    for r in &reports {
        r.validate()?;
    }
    Ok(reports)
}

/// In-domain evaluation of one scorer against one split.
///
/// Energy pairs are per structure: (|dE|, structure-level uncertainty).
/// Force pairs are per atom: (||dF_j||, per-atom uncertainty), optionally
/// aggregated to structure means. When every structure-level row carries a
/// signed score (the energy deviation head), a second pair of reports with
/// scorer suffix `-signed` evaluates the raw signed sum as well.
pub fn run_id_eval(
    scores: &UncertaintyReport,
    residuals: &ResidualDataset,
    target: Target,
    scorer: &str,
    split: &str,
    options: &IdEvalOptions,
) -> Result<Vec<EvalReport>> {
    if residuals.records.is_empty() {
        return Err(Error::invalid("empty residual dataset"));
    }
    match target {
        Target::Energy => {
            let map = scores.structure_map()?;
            let mut errors = Vec::with_capacity(residuals.records.len());
            let mut uncertainties = Vec::with_capacity(residuals.records.len());
            let mut signed = Vec::with_capacity(residuals.records.len());
            for record in &residuals.records {
                let row = map.get(record.structure_id.as_str()).ok_or_else(|| {
                    Error::invalid(format!(
                        "no structure-level score for '{}'",
                        record.structure_id
                    ))
                })?;
                errors.push(record.delta_e.abs());
                uncertainties.push(row.score);
                if let Some(s) = row.signed_score {
                    signed.push(s);
                }
            }
            let mut reports =
                spearman_and_auc(scorer, target, split, &errors, &uncertainties, options.low_quantile)?;
            if signed.len() == errors.len() {
                reports.extend(spearman_and_auc(
                    &format!("{scorer}-signed"),
                    target,
                    split,
                    &errors,
                    &signed,
                    options.low_quantile,
                )?);
            }
            Ok(reports)
        }
        Target::Force => {
            let map = scores.atom_map()?;
            let mut errors = Vec::new();
            let mut uncertainties = Vec::new();
            for record in &residuals.records {
                let mut err_sum = 0.0;
                let mut unc_sum = 0.0;
                for j in 0..record.n_atoms() {
                    let unc = map
                        .get(&(record.structure_id.as_str(), j))
                        .copied()
                        .ok_or_else(|| {
                            Error::invalid(format!(
                                "no score for atom {} of '{}'",
                                j, record.structure_id
                            ))
                        })?;
                    if options.per_structure_force {
                        err_sum += record.force_error_norm(j);
                        unc_sum += unc;
                    } else {
                        errors.push(record.force_error_norm(j));
                        uncertainties.push(unc);
                    }
                }
                if options.per_structure_force {
                    let n = record.n_atoms() as f64;
                    errors.push(err_sum / n);
                    uncertainties.push(unc_sum / n);
                }
            }
            spearman_and_auc(scorer, target, split, &errors, &uncertainties, options.low_quantile)
        }
    }
}

/// One tagged out-of-distribution set: per-structure scores and true errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OodSet {
    pub tag: String,
    pub scores: Vec<f64>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OodOptions {
    /// Restrict the Spearman correlation to the OOD side only, instead of
    /// the pooled in-domain + OOD union.
    pub spearman_ood_only: bool,
}

fn ood_pair(
    scorer: &str,
    target: Target,
    tag: &str,
    id_scores: &[f64],
    id_errors: &[f64],
    ood_scores: &[f64],
    ood_errors: &[f64],
    options: &OodOptions,
) -> Result<Vec<EvalReport>> {
    if ood_scores.is_empty() || id_scores.is_empty() {
        return Err(Error::invalid("ood evaluation needs nonempty ID and OOD sets"));
    }
    let mut scores: Vec<f64> = id_scores.to_vec();
    scores.extend_from_slice(ood_scores);
    let mut labels = vec![false; id_scores.len()];
    labels.extend(std::iter::repeat(true).take(ood_scores.len()));
    let auc = roc_auc(&scores, &labels)?;

    let rho = if options.spearman_ood_only {
        spearman(ood_errors, ood_scores)?
    } else {
        let mut errors: Vec<f64> = id_errors.to_vec();
        errors.extend_from_slice(ood_errors);
        spearman(&errors, &scores)?
    };
    let n_rho = if options.spearman_ood_only {
        ood_scores.len()
    } else {
        scores.len()
    };

    let reports = vec![
        EvalReport {
            scorer: scorer.to_string(),
            target,
            metric: Metric::Spearman,
            split: tag.to_string(),
            value: rho,
            n: n_rho,
        },
        EvalReport {
            scorer: scorer.to_string(),
            target,
            metric: Metric::Auc,
            split: tag.to_string(),
            value: auc,
            n: scores.len(),
        },
    ];
    for r in &reports {
        r.validate()?;
    }
    Ok(reports)
}

/// OOD detection: AUC with labels ID = 0 / OOD = 1 over each tagged union,
/// Spearman between uncertainty and true error over the same union, plus a
/// pooled `All` report over every tag at once.
pub fn run_ood_eval(
    id_scores: &[f64],
    id_errors: &[f64],
    ood_sets: &[OodSet],
    scorer: &str,
    target: Target,
    options: &OodOptions,
) -> Result<Vec<EvalReport>> {
    if ood_sets.is_empty() {
        return Err(Error::invalid("no OOD sets supplied"));
    }
    if id_scores.len() != id_errors.len() {
        return Err(Error::invalid("ID score/error length mismatch"));
    }
    let mut reports = Vec::new();
    for set in ood_sets {
        if set.scores.len() != set.errors.len() {
            return Err(Error::invalid(format!(
                "OOD set '{}' score/error length mismatch",
                set.tag
            )));
        }
        reports.extend(ood_pair(
            scorer, target, &set.tag, id_scores, id_errors, &set.scores, &set.errors, options,
        )?);
    }
    let mut all_scores = Vec::new();
    let mut all_errors = Vec::new();
    for set in ood_sets {
        all_scores.extend_from_slice(&set.scores);
        all_errors.extend_from_slice(&set.errors);
    }
    reports.extend(ood_pair(
        scorer, target, "All", id_scores, id_errors, &all_scores, &all_errors, options,
    )?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::ScoreRow;
    use crate::residual::ResidualRecord;
    use ndarray::Array2;

    fn residuals_with_errors(e: &[f64], f_norms: &[Vec<f64>]) -> ResidualDataset {
        let records = e
            .iter()
            .zip(f_norms)
            .enumerate()
            .map(|(i, (&delta_e, norms))| {
                let n = norms.len();
                let mut delta_f = Array2::zeros((n, 3));
                for (j, &v) in norms.iter().enumerate() {
                    delta_f[[j, 0]] = v;
                }
                ResidualRecord {
                    structure_id: format!("s{i}"),
                    descriptors: Array2::zeros((n, 2)),
                    delta_e,
                    delta_f,
                }
            })
            .collect();
        ResidualDataset {
            records,
            d_desc: 2,
        }
    }

    fn oracle_scores(ds: &ResidualDataset) -> UncertaintyReport {
        // Scores identical to the true errors.
        let mut rows = Vec::new();
        for r in &ds.records {
            rows.push(ScoreRow {
                structure_id: r.structure_id.clone(),
                atom_index: -1,
                score: r.delta_e.abs(),
                signed_score: None,
            });
            for j in 0..r.n_atoms() {
                rows.push(ScoreRow {
                    structure_id: r.structure_id.clone(),
                    atom_index: j as i64,
                    score: r.force_error_norm(j),
                    signed_score: None,
                });
            }
        }
        UncertaintyReport { rows }
    }

    #[test]
    fn oracle_scorer_is_perfect() {
        let ds = residuals_with_errors(
            &[0.1, 0.5, 0.3, 0.9, 0.2],
            &[
                vec![0.11, 0.2],
                vec![0.5, 0.12],
                vec![0.3, 0.35],
                vec![0.9, 0.8],
                vec![0.05, 0.6],
            ],
        );
        let scores = oracle_scores(&ds);
        let energy =
            run_id_eval(&scores, &ds, Target::Energy, "oracle", "test", &IdEvalOptions::default())
                .unwrap();
        assert_eq!(energy[0].value, 1.0);
        assert_eq!(energy[1].value, 1.0);
        let force =
            run_id_eval(&scores, &ds, Target::Force, "oracle", "test", &IdEvalOptions::default())
                .unwrap();
        assert_eq!(force[0].value, 1.0);
        assert_eq!(force[1].value, 1.0);
        assert_eq!(force[0].n, 10);
    }

    #[test]
    fn inverted_scorer_has_rho_minus_one() {
        let ds = residuals_with_errors(&[0.1, 0.5, 0.3, 0.9, 0.7], &vec![vec![0.0]; 5]);
        let mut scores = oracle_scores(&ds);
        for row in &mut scores.rows {
            row.score = -row.score;
        }
        let energy =
            run_id_eval(&scores, &ds, Target::Energy, "inv", "test", &IdEvalOptions::default())
                .unwrap();
        assert_eq!(energy[0].value, -1.0);
    }

    #[test]
    fn coverage_gap_is_an_error() {
        let ds = residuals_with_errors(&[0.1, 0.5], &[vec![0.2], vec![0.3]]);
        let mut scores = oracle_scores(&ds);
        scores.rows.retain(|r| r.structure_id != "s1" || r.atom_index < 0);
        let err = run_id_eval(&scores, &ds, Target::Force, "x", "t", &IdEvalOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("no score for atom"), "{err}");
    }

    #[test]
    fn signed_scores_get_their_own_reports() {
        let ds = residuals_with_errors(&[0.4, 0.1, 0.8, 0.2, 0.9], &vec![vec![0.0]; 5]);
        let mut scores = UncertaintyReport::default();
        for r in &ds.records {
            scores.rows.push(ScoreRow {
                structure_id: r.structure_id.clone(),
                atom_index: -1,
                score: r.delta_e.abs(),
                signed_score: Some(-r.delta_e),
            });
        }
        let reports =
            run_id_eval(&scores, &ds, Target::Energy, "e-diff", "test", &IdEvalOptions::default())
                .unwrap();
        assert_eq!(reports.len(), 4);
        assert_eq!(reports[2].scorer, "e-diff-signed");
        assert_eq!(reports[2].value, -1.0);
    }

    #[test]
    fn per_structure_force_aggregation() {
        let ds = residuals_with_errors(
            &[0.0, 0.0, 0.0, 0.0, 0.0],
            &[
                vec![1.0, 3.0],
                vec![5.0, 7.0],
                vec![0.5, 0.75],
                vec![2.0, 2.5],
                vec![4.0, 4.5],
            ],
        );
        let scores = oracle_scores(&ds);
        let opts = IdEvalOptions {
            per_structure_force: true,
            ..IdEvalOptions::default()
        };
        let reports = run_id_eval(&scores, &ds, Target::Force, "o", "t", &opts).unwrap();
        assert_eq!(reports[0].n, 5);
        assert_eq!(reports[0].value, 1.0);
        assert_eq!(reports[1].value, 1.0);
    }

    #[test]
    fn ood_separation_gives_auc_one() {
        let id_scores = vec![0.1, 0.2, 0.15, 0.12];
        let id_errors = vec![0.1, 0.2, 0.15, 0.12];
        let sets = vec![OodSet {
            tag: "shift".into(),
            scores: vec![1.0, 2.0, 1.5],
            errors: vec![1.0, 2.0, 1.5],
        }];
        let reports = run_ood_eval(
            &id_scores,
            &id_errors,
            &sets,
            "knn",
            Target::Force,
            &OodOptions::default(),
        )
        .unwrap();
        // Per-tag pair then pooled pair.
        assert_eq!(reports.len(), 4);
        assert_eq!(reports[1].value, 1.0);
        assert_eq!(reports[3].value, 1.0);
        assert_eq!(reports[3].split, "All");
    }

    #[test]
    fn identical_sets_give_auc_half() {
        let scores: Vec<f64> = (0..250).map(|i| (i as f64 * 0.731).sin()).collect();
        let sets = vec![OodSet {
            tag: "self".into(),
            scores: scores.clone(),
            errors: scores.clone(),
        }];
        let reports = run_ood_eval(
            &scores,
            &scores,
            &sets,
            "x",
            Target::Force,
            &OodOptions::default(),
        )
        .unwrap();
        assert!((reports[1].value - 0.5).abs() <= 0.05);
    }

    #[test]
    fn pooled_all_equals_recomputed_concatenation() {
        let id_scores: Vec<f64> = (0..40).map(|i| (i as f64 * 0.17).cos()).collect();
        let id_errors: Vec<f64> = (0..40).map(|i| (i as f64 * 0.29).sin() + 2.0).collect();
        let sets = vec![
            OodSet {
                tag: "a".into(),
                scores: (0..15).map(|i| 0.3 + i as f64 * 0.01).collect(),
                errors: (0..15).map(|i| 2.0 + i as f64 * 0.05).collect(),
            },
            OodSet {
                tag: "b".into(),
                scores: (0..25).map(|i| 0.8 - i as f64 * 0.02).collect(),
                errors: (0..25).map(|i| 3.0 - i as f64 * 0.03).collect(),
            },
        ];
        let reports = run_ood_eval(
            &id_scores,
            &id_errors,
            &sets,
            "x",
            Target::Force,
            &OodOptions::default(),
        )
        .unwrap();
        let all_auc = reports
            .iter()
            .find(|r| r.split == "All" && r.metric == Metric::Auc)
            .unwrap()
            .value;
        let mut scores = id_scores.clone();
        let mut labels = vec![false; id_scores.len()];
        for set in &sets {
            scores.extend_from_slice(&set.scores);
            labels.extend(std::iter::repeat(true).take(set.scores.len()));
        }
        assert_eq!(all_auc, roc_auc(&scores, &labels).unwrap());
    }

    #[test]
    fn ood_only_spearman_flag() {
        let id_scores = vec![0.0, 0.1, 0.2];
        let id_errors = vec![0.0, 0.1, 0.2];
        let sets = vec![OodSet {
            tag: "t".into(),
            scores: vec![1.0, 2.0, 3.0],
            errors: vec![3.0, 2.0, 1.0],
        }];
        let opts = OodOptions {
            spearman_ood_only: true,
        };
        let reports =
            run_ood_eval(&id_scores, &id_errors, &sets, "x", Target::Force, &opts).unwrap();
        assert_eq!(reports[0].value, -1.0);
        assert_eq!(reports[0].n, 3);
    }
}
