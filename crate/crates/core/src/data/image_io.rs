use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Decoded pixels in `[0, 255]`, row-major, 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if !matches!(channels, 1 | 3) || data.len() != width * height * channels {
            return Err(Error::InvalidTensor(format!(
                "pixel grid {width}x{height}x{channels} with {} values",
                data.len()
            )));
        }
        Ok(PixelGrid {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// `(1, size, size, 3)` in `[0, 1]`.
    pub pixels: Tensor<f32>,
    pub label: usize,
}

/// Decodes a PNG or JPEG. Grayscale sources stay single-channel; alpha is
/// dropped.
pub fn load_image(path: &Path) -> Result<PixelGrid> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let data = img.to_rgb8().into_raw().into_iter().map(f32::from).collect();
        PixelGrid::new(width, height, 3, data)
    } else {
        let data = img.to_luma8().into_raw().into_iter().map(f32::from).collect();
        PixelGrid::new(width, height, 1, data)
    }
}

/// Writes 8-bit gray or RGB, rounding and clamping to `[0, 255]`.
pub fn write_png(path: &Path, grid: &PixelGrid) -> Result<()> {
    let bytes: Vec<u8> = grid.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let color = if grid.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer(path, &bytes, grid.width as u32, grid.height as u32, color)?;
    Ok(())
}

/// Source coordinate for half-pixel-centred sampling, clamped to the grid.
fn source_taps(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, (src - lo as f64) as f32)
}

/// Bilinear resize with half-pixel centres (corners not aligned). Equal
/// sizes return the input unchanged.
pub fn resize_bilinear(grid: &PixelGrid, width: usize, height: usize) -> PixelGrid {
    assert!(width > 0 && height > 0, "resize target must be non-empty");
    if grid.width == width && grid.height == height {
        return grid.clone();
    }
    let cols: Vec<_> = (0..width).map(|x| source_taps(x, grid.width, width)).collect();
    let mut data = Vec::with_capacity(width * height * grid.channels);
    for y in 0..height {
        let (y0, y1, fy) = source_taps(y, grid.height, height);
        for &(x0, x1, fx) in &cols {
            for c in 0..grid.channels {
                let top = grid.at(y0, x0, c) * (1.0 - fx) + grid.at(y0, x1, c) * fx;
                let bottom = grid.at(y1, x0, c) * (1.0 - fx) + grid.at(y1, x1, c) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    PixelGrid {
        width,
        height,
        channels: grid.channels,
        data,
    }
}

/// Scales to `[0, 1]` and replicates gray across three channels.
pub fn to_sample(grid: &PixelGrid, label: usize) -> ImageSample {
    let shape = Shape::new(1, grid.height, grid.width, 3);
    let pixels = Tensor::from_fn(shape, |_, y, x, c| {
        let src = if grid.channels == 1 { 0 } else { c };
        grid.at(y, x, src) / 255.0
    });
    ImageSample { pixels, label }
}
