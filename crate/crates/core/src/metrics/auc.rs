use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mann–Whitney AUC of `scores` for positives over negatives, ties counting
/// one half. `None` when either group is empty.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "one flag per score");
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // 1-based average ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg_rank * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    /// `None` for classes without positives or without negatives.
    pub per_class: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
    /// Support-weighted over defined classes.
    pub weighted_auc: Option<f64>,
    pub undefined: Vec<usize>,
}

/// One-vs-rest AUC per class from probability rows.
pub fn roc_auc_ovr(probs: &[Vec<f64>], truth: &[usize]) -> Result<AucReport> {
    if probs.len() != truth.len() {
        return Err(Error::Mismatch(format!("{} score rows for {} labels", probs.len(), truth.len())));
    }
    let k = probs.first().map_or(0, |r| r.len());
    for row in probs {
        let s: f64 = row.iter().sum();
        if row.len() != k || (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidTensor(format!("probability row sums to {s} over {} classes", row.len())));
        }
    }
    if let Some(&label) = truth.iter().find(|&&t| t >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let mut per_class = Vec::with_capacity(k);
    let mut undefined = Vec::new();
    let (mut sum, mut count, mut wsum, mut wden) = (0.0, 0usize, 0.0, 0.0);
    for c in 0..k {
        let scores: Vec<f64> = probs.iter().map(|r| r[c]).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let auc = auc_binary(&scores, &positive);
        match auc {
            Some(a) => {
                let support = positive.iter().filter(|&&p| p).count() as f64;
                sum += a;
                count += 1;
                wsum += a * support;
                wden += support;
            }
            None => undefined.push(c),
        }
        per_class.push(auc);
    }
    Ok(AucReport {
        per_class,
        macro_auc: (count > 0).then(|| sum / count as f64),
        weighted_auc: (wden > 0.0).then(|| wsum / wden),
        undefined,
    })
}
