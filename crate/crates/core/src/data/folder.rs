use std::path::PathBuf;

use crate::data::image_io::{load_image, resize_bilinear, to_sample};
use crate::error::Result;
use crate::tensor::{Shape, Tensor};
use crate::train::Samples;

/// One step of the sample pipeline. None of them is an augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Decode,
    ResizeBilinear,
    ScaleToUnit,
    GrayToRgb,
}

impl Stage {
    pub fn is_augmentation(self) -> bool {
        false
    }
}

/// The full, fixed sequence applied to every image.
pub fn pipeline_stages() -> &'static [Stage] {
    &[Stage::Decode, Stage::ResizeBilinear, Stage::ScaleToUnit, Stage::GrayToRgb]
}

/// Lazily decoded image files, resized to a square side on load.
#[derive(Debug, Clone)]
pub struct ImageFolderDataset {
    records: Vec<(PathBuf, usize)>,
    size: usize,
}

impl ImageFolderDataset {
    pub fn new(records: Vec<(PathBuf, usize)>, size: usize) -> Self {
        ImageFolderDataset { records, size }
    }

    pub fn records(&self) -> &[(PathBuf, usize)] {
        &self.records
    }

    pub fn describe(&self) -> &'static [Stage] {
        pipeline_stages()
    }
}

impl Samples for ImageFolderDataset {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn label(&self, i: usize) -> usize {
        self.records[i].1
    }

    fn sample_shape(&self) -> Shape {
        Shape::new(1, self.size, self.size, 3)
    }

    fn load(&self, i: usize) -> Result<Tensor<f32>> {
        let (path, label) = &self.records[i];
        let grid = resize_bilinear(&load_image(path)?, self.size, self.size);
        Ok(to_sample(&grid, *label).pixels)
    }
}
