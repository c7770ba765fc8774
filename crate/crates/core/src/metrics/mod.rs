//! Confusion matrices and the per-class, weighted and macro metrics built
//! on them, plus one-vs-rest ROC AUC.

mod auc;
mod confusion;
mod report;

pub use auc::{auc_binary, roc_auc_ovr, AucReport};
pub use confusion::{aggregate, class_metrics, confusion, Average, ClassMetrics, ConfusionMatrix, MetricFlags};
pub use report::{build_report, Averages, ClassRow, EvalReport};
