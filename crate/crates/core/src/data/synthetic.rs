//! Constant-colour image families plus uniform noise: a corpus whose
//! classes are separable by channel means.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::image_io::{to_sample, write_png, PixelGrid};
use crate::error::{Error, Result};
use crate::train::InMemoryDataset;

const PALETTE: [(&str, [u8; 3]); 8] = [
    ("red", [200, 50, 50]),
    ("green", [50, 190, 70]),
    ("blue", [50, 70, 210]),
    ("yellow", [215, 200, 50]),
    ("magenta", [200, 60, 200]),
    ("cyan", [60, 200, 200]),
    ("gray", [128, 128, 128]),
    ("black", [25, 25, 25]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    /// Half-width of the per-pixel uniform noise, in 8-bit units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            per_class: 10,
            size: 32,
            noise: 40.0,
            seed: 7,
        }
    }
}

/// Class names sort in label order.
pub fn class_names(classes: usize) -> Vec<String> {
    PALETTE[..classes]
        .iter()
        .enumerate()
        .map(|(i, (name, _))| format!("class{i}_{name}"))
        .collect()
}

pub type LabelledGrids = Vec<(PixelGrid, usize)>;

/// Grids (integer-valued, so a PNG round trip is exact) and labels, class by class.
pub fn generate(spec: &SyntheticSpec) -> Result<(Vec<String>, LabelledGrids)> {
    if !(2..=PALETTE.len()).contains(&spec.classes) || spec.per_class == 0 || spec.size == 0 {
        return Err(Error::Config(format!(
            "synthetic corpus needs 2..={} classes and non-empty images: {spec:?}",
            PALETTE.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.classes * spec.per_class);
    for (label, (_, colour)) in PALETTE[..spec.classes].iter().enumerate() {
        for _ in 0..spec.per_class {
            let mut data = Vec::with_capacity(spec.size * spec.size * 3);
            for _ in 0..spec.size * spec.size {
                for &c in colour {
                    let v = c as f64 + rng.gen_range(-spec.noise..=spec.noise);
                    data.push(v.round().clamp(0.0, 255.0) as f32);
                }
            }
            out.push((PixelGrid::new(spec.size, spec.size, 3, data)?, label));
        }
    }
    Ok((class_names(spec.classes), out))
}

pub fn in_memory(spec: &SyntheticSpec) -> Result<(Vec<String>, InMemoryDataset)> {
    let (names, items) = generate(spec)?;
    let (tensors, labels) = items
        .iter()
        .map(|(g, label)| (to_sample(g, *label).pixels, *label))
        .unzip();
    Ok((names, InMemoryDataset::new(tensors, labels)?))
}

/// Writes `root/<class>/img_NNN.png` and returns the class names.
pub fn write_corpus(root: &Path, spec: &SyntheticSpec) -> Result<Vec<String>> {
    let (names, items) = generate(spec)?;
    for name in &names {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for (i, (grid, label)) in items.iter().enumerate() {
        let path = root
            .join(&names[*label])
            .join(format!("img_{:03}.png", i % spec.per_class));
        write_png(&path, grid)?;
    }
    Ok(names)
}
