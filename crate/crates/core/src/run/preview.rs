use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{load_image, write_png, PixelGrid};
use crate::error::{Error, Result};
use crate::layers::avg2max_forward;
use crate::tensor::{Shape, Tensor};

/// Avg-2Max pooling per channel on raw pixel values, min-max rescaled to
/// `[0, 255]` over the whole image. A constant result maps to 0.
pub fn avg2max_preview(grid: &PixelGrid) -> Result<PixelGrid> {
    let x = Tensor::from_vec(
        Shape::new(1, grid.height, grid.width, grid.channels),
        grid.data.clone(),
    )?;
    let (y, _) = avg2max_forward(&x)?;
    let (lo, hi) = y
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let data = if hi > lo {
        y.data().iter().map(|v| (v - lo) / (hi - lo) * 255.0).collect()
    } else {
        vec![0.0; y.shape().len()]
    };
    let s = y.shape();
    PixelGrid::new(s.w, s.h, s.c, data)
}

#[derive(Debug)]
pub struct PreviewOutcome {
    pub input: PathBuf,
    pub output: std::result::Result<PathBuf, Error>,
}

/// Writes `<stem>_avg2max.png` for each image; a failure on one image does
/// not stop the others.
pub fn cmd_pool_preview(images: &[PathBuf], out_dir: &Path) -> Result<Vec<PreviewOutcome>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(images
        .iter()
        .map(|input| {
            let output = (|| {
                let preview = avg2max_preview(&load_image(input)?)?;
                let stem = input.file_stem().map_or("image".into(), |s| s.to_string_lossy());
                let path = out_dir.join(format!("{stem}_avg2max.png"));
                write_png(&path, &preview)?;
                Ok(path)
            })();
            PreviewOutcome {
                input: input.clone(),
                output,
            }
        })
        .collect())
}
