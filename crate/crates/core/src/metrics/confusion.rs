use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `k × k` counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Mismatch("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// True count of class `c` (row sum).
    pub fn support(&self, c: usize) -> u64 {
        (0..self.k).map(|j| self.get(c, j)).sum()
    }

    /// Predicted count of class `c` (column sum).
    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, c)).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total()).0
    }

    /// One-vs-rest `(tp, fp, fn, tn)` for class `c`.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(c, c);
        let fp = self.predicted(c) - tp;
        let fn_ = self.support(c) - tp;
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Mismatch(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![0u64; k * k];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

/// Set when the metric's denominator was zero and 0 was reported instead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
    pub specificity_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub support: u64,
    pub flags: MetricFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|c| {
            let (tp, fp, fn_, tn) = cm.one_vs_rest(c);
            let (precision, p_undef) = ratio(tp, tp + fp);
            let (recall, r_undef) = ratio(tp, tp + fn_);
            let (specificity, s_undef) = ratio(tn, tn + fp);
            // harmonic mean of precision and recall, in count form
            let (f1, _) = ratio(2 * tp, 2 * tp + fp + fn_);
            ClassMetrics {
                tp,
                fp,
                fn_,
                tn,
                precision,
                recall,
                f1,
                specificity,
                support: tp + fn_,
                flags: MetricFlags {
                    precision_undefined: p_undef,
                    recall_undefined: r_undef,
                    f1_undefined: 2 * tp + fp + fn_ == 0,
                    specificity_undefined: s_undef,
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Support-weighted mean.
    Weighted,
    /// Unweighted mean over classes with nonzero support.
    Macro,
}

/// Averages per-class `values`; 0 when no class qualifies.
pub fn aggregate(values: &[f64], supports: &[u64], mode: Average) -> f64 {
    assert_eq!(values.len(), supports.len(), "one support per value");
    let pairs: Vec<(f64, u64)> = values
        .iter()
        .zip(supports)
        .filter(|(_, &s)| s > 0)
        .map(|(&v, &s)| (v, s))
        .collect();
    if pairs.is_empty() {
        return 0.0;
    }
    match mode {
        Average::Weighted => {
            let total: u64 = pairs.iter().map(|p| p.1).sum();
            pairs.iter().map(|&(v, s)| s as f64 / total as f64 * v).sum()
        }
        Average::Macro => pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(&[vec![8, 2], vec![1, 9]]).unwrap()
    }

    #[test]
    fn worked_example_by_hand() {
        let truth: Vec<usize> = [vec![0; 10], vec![1; 10]].concat();
        let pred: Vec<usize> = [vec![0; 8], vec![1; 2], vec![0; 1], vec![1; 9]].concat();
        assert_eq!(confusion(&truth, &pred, 2).unwrap(), worked());
        let m = class_metrics(&worked());
        assert!((m[0].precision - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(m[0].recall, 0.8);
        assert!((m[0].f1 - 16.0 / 19.0).abs() < 1e-15);
        // one-vs-rest for class 0: tn = 9, fp = 1
        assert_eq!(m[0].specificity, 0.9);
        assert!((m[1].specificity - 0.8).abs() < 1e-15);
        assert_eq!(worked().accuracy(), 0.85);
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        for m in class_metrics(&cm) {
            assert_eq!((m.precision, m.recall, m.f1, m.specificity), (1.0, 1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn empty_and_out_of_range() {
        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(confusion(&[0], &[3], 3), Err(Error::LabelOutOfRange { label: 3, .. })));
    }

    #[test]
    fn zero_support_is_flagged_and_left_out_of_macro() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        let m = class_metrics(&cm);
        assert!(m[2].flags.recall_undefined && m[2].flags.precision_undefined && m[2].flags.f1_undefined);
        assert_eq!(m[2].recall, 0.0);
        let recalls: Vec<f64> = m.iter().map(|c| c.recall).collect();
        let supports: Vec<u64> = m.iter().map(|c| c.support).collect();
        assert_eq!(aggregate(&recalls, &supports, Average::Macro), 0.75);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[1.0, 0.0], &[90, 10], Average::Weighted), 0.9);
        assert_eq!(aggregate(&[1.0, 0.0], &[90, 10], Average::Macro), 0.5);
        assert_eq!(aggregate(&[0.3, 0.7], &[5, 5], Average::Weighted), aggregate(&[0.3, 0.7], &[5, 5], Average::Macro));
        assert_eq!(aggregate(&[0.4], &[3], Average::Weighted), 0.4);
        assert_eq!(aggregate(&[0.4], &[3], Average::Macro), 0.4);
    }
}
