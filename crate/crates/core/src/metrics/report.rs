use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aggregate, class_metrics, confusion, roc_auc_ovr, Average, ConfusionMatrix, MetricFlags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub auc: Option<f64>,
    pub flags: MetricFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: u64,
    pub accuracy: f64,
    pub classes: Vec<ClassRow>,
    pub weighted: Averages,
    pub macro_avg: Averages,
    /// Zero-support classes left out of the macro means.
    pub macro_excluded: Vec<String>,
    /// Classes whose AUC is undefined (no positives or no negatives).
    pub auc_undefined: Vec<String>,
    pub confusion: ConfusionMatrix,
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Full report from class names, true labels and probability rows.
pub fn build_report(class_names: &[String], truth: &[usize], probs: &[Vec<f64>]) -> Result<EvalReport> {
    let k = class_names.len();
    if probs.iter().any(|r| r.len() != k) {
        return Err(Error::Mismatch(format!("probability rows must have {k} entries")));
    }
    let predicted: Vec<usize> = probs.iter().map(|r| argmax(r)).collect();
    let cm = confusion(truth, &predicted, k)?;
    let per = class_metrics(&cm);
    let auc = roc_auc_ovr(probs, truth)?;
    let supports: Vec<u64> = per.iter().map(|m| m.support).collect();
    let avg = |mode: Average| {
        let col = |f: fn(&crate::metrics::ClassMetrics) -> f64| {
            aggregate(&per.iter().map(f).collect::<Vec<_>>(), &supports, mode)
        };
        Averages {
            precision: col(|m| m.precision),
            recall: col(|m| m.recall),
            f1: col(|m| m.f1),
            specificity: col(|m| m.specificity),
            auc: match mode {
                Average::Weighted => auc.weighted_auc,
                Average::Macro => auc.macro_auc,
            },
        }
    };
    Ok(EvalReport {
        samples: cm.total(),
        accuracy: cm.accuracy(),
        classes: per
            .iter()
            .zip(class_names)
            .zip(&auc.per_class)
            .map(|((m, name), a)| ClassRow {
                class: name.clone(),
                support: m.support,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                specificity: m.specificity,
                auc: *a,
                flags: m.flags,
            })
            .collect(),
        weighted: avg(Average::Weighted),
        macro_avg: avg(Average::Macro),
        macro_excluded: (0..k).filter(|&c| supports[c] == 0).map(|c| class_names[c].clone()).collect(),
        auc_undefined: auc.undefined.iter().map(|&c| class_names[c].clone()).collect(),
        confusion: cm,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|a| a.to_string()).unwrap_or_default()
}

impl EvalReport {
    /// Per-class rows followed by `macro avg`, `weighted avg` and
    /// `accuracy` rows (accuracy sits in the f1 column).
    pub fn write_classification_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "support", "precision", "recall", "f1", "specificity", "auc"])?;
        for r in &self.classes {
            w.write_record([
                r.class.clone(),
                r.support.to_string(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string(),
                r.specificity.to_string(),
                opt(r.auc),
            ])?;
        }
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted)] {
            w.write_record([
                name.to_string(),
                self.samples.to_string(),
                a.precision.to_string(),
                a.recall.to_string(),
                a.f1.to_string(),
                a.specificity.to_string(),
                opt(a.auc),
            ])?;
        }
        w.write_record([
            "accuracy".to_string(),
            self.samples.to_string(),
            String::new(),
            String::new(),
            self.accuracy.to_string(),
            String::new(),
            String::new(),
        ])?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for row in self.confusion.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<20} {:>7} {:>9} {:>9} {:>9} {:>11} {:>7}\n",
            "class", "support", "precision", "recall", "f1", "specificity", "auc"
        );
        let fmt_auc = |a: Option<f64>| a.map_or("-".to_string(), |v| format!("{v:.4}"));
        for r in &self.classes {
            out.push_str(&format!(
                "{:<20} {:>7} {:>9.4} {:>9.4} {:>9.4} {:>11.4} {:>7}\n",
                r.class,
                r.support,
                r.precision,
                r.recall,
                r.f1,
                r.specificity,
                fmt_auc(r.auc)
            ));
        }
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted)] {
            out.push_str(&format!(
                "{:<20} {:>7} {:>9.4} {:>9.4} {:>9.4} {:>11.4} {:>7}\n",
                name,
                self.samples,
                a.precision,
                a.recall,
                a.f1,
                a.specificity,
                fmt_auc(a.auc)
            ));
        }
        out.push_str(&format!("accuracy {:.4} over {} samples\n", self.accuracy, self.samples));
        out
    }
}
