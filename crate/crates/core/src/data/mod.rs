//! Directory-per-class corpora: scanning, stratified splitting, decoding,
//! resizing and batching.

mod folder;
mod image_io;
mod scan;
mod split;
pub mod synthetic;

pub use folder::{pipeline_stages, ImageFolderDataset, Stage};
pub use image_io::{load_image, resize_bilinear, to_sample, write_png, ImageSample, PixelGrid};
pub use scan::{scan_dataset, ScanReport, Skipped};
pub use split::{round_half_up, stratified_split, DatasetIndex, Record, Split, SplitRatios};
