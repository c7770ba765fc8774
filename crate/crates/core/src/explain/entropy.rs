use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{Network, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

pub const DEFAULT_BINS: usize = 256;

/// Shannon entropy in bits of a `bins`-bin equal-width histogram over
/// `[min, max]`. Constant inputs give 0.
pub fn feature_entropy<T: Real>(values: &[T], bins: usize) -> f64 {
    assert!(bins >= 2, "at least two bins");
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let v = v.as_f64();
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() || hi <= lo {
        return 0.0;
    }
    let mut counts = vec![0u64; bins];
    for v in values {
        let t = (v.as_f64() - lo) / (hi - lo);
        counts[((t * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTap {
    pub tap: String,
    pub model: String,
    pub bits: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub model: String,
    pub bins: usize,
    pub taps: Vec<EntropyTap>,
}

/// Name and node of the tensor entering each merge block and global pooling.
fn taps(net: &Network, merge_blocks: &[usize]) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = merge_blocks
        .iter()
        .filter_map(|b| {
            let prefix = format!("block{b}/");
            let first = net.nodes().iter().find(|n| n.name.starts_with(&prefix))?;
            Some((format!("block{b}/input"), first.inputs[0]))
        })
        .collect();
    out.push(("gap/input".into(), net.gap_input()));
    out
}

fn measure(
    label: &str,
    net: &Network,
    params: &ParamStore<f32>,
    samples: &Tensor<f32>,
    merge_blocks: &[usize],
    bins: usize,
) -> Result<EntropyReport> {
    let cache = net.forward(params, samples, Mode::Infer)?;
    let taps = taps(net, merge_blocks)
        .into_iter()
        .map(|(tap, node)| EntropyTap {
            tap,
            model: label.to_string(),
            bits: feature_entropy(cache.output(node).expect("retained").data(), bins),
            bins,
        })
        .collect();
    Ok(EntropyReport {
        model: label.to_string(),
        bins,
        taps,
    })
}

/// Entropy of the features entering each pcb merge block and global pooling,
/// for a model with pcbs and one without. A diagnostic: no ordering is
/// asserted.
pub fn entropy_compare(
    with_pcb: (&Network, &ParamStore<f32>),
    without_pcb: (&Network, &ParamStore<f32>),
    samples: &Tensor<f32>,
    bins: usize,
) -> Result<(EntropyReport, EntropyReport)> {
    let (a, b) = (with_pcb.0.config(), without_pcb.0.config());
    if a.without_pcbs() != b.without_pcbs() {
        return Err(Error::Mismatch(
            "entropy comparison needs models that differ only in their pcbs".into(),
        ));
    }
    if bins < 2 {
        return Err(Error::OutOfRange {
            what: "histogram bins",
            value: bins,
            min: 2,
            max: usize::MAX,
        });
    }
    let merges: Vec<usize> = a.pcbs.iter().chain(&b.pcbs).map(|p| p.merge_before_block).collect();
    let mut merges = merges;
    merges.sort_unstable();
    merges.dedup();
    Ok((
        measure("with_pcb", with_pcb.0, with_pcb.1, samples, &merges, bins)?,
        measure("without_pcb", without_pcb.0, without_pcb.1, samples, &merges, bins)?,
    ))
}

pub fn write_entropy_csv(path: &Path, reports: &[&EntropyReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        for t in &r.taps {
            w.serialize(t)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
