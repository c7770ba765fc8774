use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{resize_bilinear, write_png, PixelGrid};
use crate::error::{Error, Result};
use crate::explain::HeatMap;
use crate::tensor::Tensor;

pub const DEFAULT_ALPHA: f32 = 0.4;

/// Jet colour map on `[0, 1]`, as 8-bit-scale RGB.
pub fn jet(t: f32) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0);
    let ramp = |centre: f32| (1.5 - (4.0 * t - centre).abs()).clamp(0.0, 1.0) * 255.0;
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

/// Upsamples `map` bilinearly to the sample's size and alpha-blends its jet
/// colouring over the `(1, h, w, 3)` image in `[0, 1]`.
pub fn overlay(map: &HeatMap, sample: &Tensor<f32>, alpha: f32) -> Result<PixelGrid> {
    let s = sample.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::InvalidTensor(format!("overlay expects a (1,h,w,3) sample, got {s}")));
    }
    let small = PixelGrid::new(map.width, map.height, 1, map.values.clone())?;
    let big = resize_bilinear(&small, s.w, s.h);
    let mut data = Vec::with_capacity(s.len());
    for (i, px) in sample.data().chunks_exact(3).enumerate() {
        let colour = jet(big.data[i]);
        for c in 0..3 {
            data.push((1.0 - alpha) * px[c] * 255.0 + alpha * colour[c]);
        }
    }
    PixelGrid::new(s.w, s.h, 3, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMapSidecar {
    pub layer: String,
    pub class: usize,
    pub class_name: Option<String>,
    /// Map maximum before normalization.
    pub normalization_max: f32,
    pub map_height: usize,
    pub map_width: usize,
    pub alpha: f32,
    pub map_png: String,
    pub overlay_png: String,
}

/// Writes `<stem>_map.png` (map at layer resolution), `<stem>_overlay.png`
/// and `<stem>.json` into `dir`.
pub fn write_heatmap(
    dir: &Path,
    stem: &str,
    map: &HeatMap,
    sample: &Tensor<f32>,
    class_name: Option<&str>,
    alpha: f32,
) -> Result<HeatMapSidecar> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw = PixelGrid::new(map.width, map.height, 1, map.values.iter().map(|v| v * 255.0).collect())?;
    let sidecar = HeatMapSidecar {
        layer: map.source_layer.clone(),
        class: map.target_class,
        class_name: class_name.map(str::to_string),
        normalization_max: map.raw_max,
        map_height: map.height,
        map_width: map.width,
        alpha,
        map_png: format!("{stem}_map.png"),
        overlay_png: format!("{stem}_overlay.png"),
    };
    write_png(&dir.join(&sidecar.map_png), &raw)?;
    write_png(&dir.join(&sidecar.overlay_png), &overlay(map, sample, alpha)?)?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&json, e))?;
    Ok(sidecar)
}
