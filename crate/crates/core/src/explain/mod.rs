//! Grad-CAM heat maps and histogram-entropy diagnostics.

mod entropy;
mod gradcam;
mod overlay;

pub use entropy::{entropy_compare, feature_entropy, write_entropy_csv, EntropyReport, EntropyTap, DEFAULT_BINS};
pub use gradcam::{gradcam, gradcam_from, HeatMap};
pub use overlay::{jet, overlay, write_heatmap, HeatMapSidecar, DEFAULT_ALPHA};
