//! Run directories and the operations behind each CLI command.

mod config;
mod curves;
mod eval;
mod lock;
mod preview;
mod train_cmd;

pub use config::{RunConfig, CONFIG_FILE, DEFAULT_SEED, HISTORY_FILE, SPLITS_FILE};
pub use curves::{render_curves, CURVES_FILE};
pub use eval::{
    cmd_eval, cmd_gradcam, cmd_predict, cmd_report, EvalOutput, EvalRequest, GradcamOutput, Prediction,
    ReportSummary, CLASSIFICATION_FILE, CONFUSION_FILE, ENTROPY_FILE, REPORT_JSON, SUMMARY_FILE,
};
pub use lock::RunLock;
pub use preview::{avg2max_preview, cmd_pool_preview, PreviewOutcome};
pub use train_cmd::{cmd_train, cmd_train_with_progress, RunSummary};
