use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{Network, ParamStore};
use crate::tensor::{Shape, Tensor};

/// Non-negative map at a layer's spatial resolution, max-normalized to 1
/// unless all zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub source_layer: String,
    pub target_class: usize,
    /// Maximum of the map before normalization.
    pub raw_max: f32,
}

impl HeatMap {
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// `ReLU(Σ_k mean(∂y/∂A_k)·A_k)` for one item; `activations` and
/// `gradients` are `(1, h, w, c)`.
pub fn gradcam_from(
    activations: &Tensor<f32>,
    gradients: &Tensor<f32>,
    source_layer: &str,
    target_class: usize,
) -> Result<HeatMap> {
    let s = activations.shape();
    gradients.shape().expect_eq(&s, "gradcam")?;
    if s.n != 1 {
        return Err(Error::InvalidTensor(format!("gradcam expects one item, got {s}")));
    }
    let area = (s.h * s.w) as f32;
    let mut weights = vec![0.0f32; s.c];
    for px in gradients.data().chunks_exact(s.c) {
        for (w, &g) in weights.iter_mut().zip(px) {
            *w += g;
        }
    }
    weights.iter_mut().for_each(|w| *w /= area);
    let mut values: Vec<f32> = activations
        .data()
        .chunks_exact(s.c)
        .map(|px| px.iter().zip(&weights).map(|(a, w)| a * w).sum::<f32>().max(0.0))
        .collect();
    let raw_max = values.iter().copied().fold(0.0, f32::max);
    if raw_max > 0.0 {
        values.iter_mut().for_each(|v| *v /= raw_max);
    }
    Ok(HeatMap {
        height: s.h,
        width: s.w,
        values,
        source_layer: source_layer.to_string(),
        target_class,
        raw_max,
    })
}

/// Grad-CAM of `target_class` for one `(1, h, w, 3)` sample at `layer`,
/// with the network in inference mode.
pub fn gradcam(
    net: &Network,
    params: &ParamStore<f32>,
    sample: &Tensor<f32>,
    target_class: usize,
    layer: &str,
) -> Result<HeatMap> {
    let valid = net.spatial_layers();
    if !valid.iter().any(|v| v == layer) {
        return Err(Error::UnknownLayer {
            name: layer.to_string(),
            valid,
        });
    }
    let classes = net.config().num_classes;
    if target_class >= classes {
        return Err(Error::LabelOutOfRange {
            label: target_class,
            classes,
        });
    }
    let node = net.node_id(layer).expect("listed layer exists");
    let cache = net.forward(params, sample, Mode::Infer)?;
    let activations = cache.output(node).expect("retained").clone();
    let seed = Tensor::from_fn(Shape::new(1, 1, 1, classes), |_, _, _, c| {
        if c == target_class {
            1.0
        } else {
            0.0
        }
    });
    let grads = net
        .backprop(params, cache, &seed, Some(node))?
        .tap
        .unwrap_or_else(|| Tensor::zeros(activations.shape()));
    gradcam_from(&activations, &grads, layer, target_class)
}
