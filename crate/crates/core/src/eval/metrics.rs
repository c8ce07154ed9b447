//! Rank-based metrics: Spearman correlation, Mann-Whitney ROC AUC, and the
//! low/high error class split.

use crate::error::{Error, Result};

/// 1-based fractional ranks with ties assigned their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation: Pearson correlation of average-tie ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "spearman length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("spearman needs at least 2 samples"));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::invalid("spearman is undefined for a constant sequence"));
    }
    let rho = pearson(&average_ranks(xs), &average_ranks(ys));
    Ok(rho.clamp(-1.0, 1.0))
}

/// ROC AUC in the Mann-Whitney form `(wins + 0.5 ties) / (n_pos * n_neg)`,
/// computed through average ranks. `true` labels the positive class
/// (high error, or out-of-distribution).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "auc length mismatch: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("auc needs both classes present"));
    }
    let ranks = average_ranks(scores);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    // Rank sums are exact half-integers, so this equals pair counting with
    // half credit for ties, bit for bit.
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Label the floor(q * n) smallest errors as the low class (`false`) and the
/// rest high (`true`). Boundary ties are broken by original index order.
pub fn error_split(errors: &[f64], low_quantile: f64) -> Result<Vec<bool>> {
    if errors.is_empty() {
        return Err(Error::invalid("error_split needs a nonempty list"));
    }
    if !(low_quantile > 0.0 && low_quantile < 1.0) {
        return Err(Error::invalid("low_quantile must lie in (0, 1)"));
    }
    // Guard against 0.3 * 10 = 2.9999... style float droop.
    let k = (low_quantile * errors.len() as f64 + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]));
    let mut labels = vec![true; errors.len()];
    for &idx in &order[..k] {
        labels[idx] = false;
    }
    Ok(labels)
}
