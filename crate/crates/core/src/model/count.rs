//! Closed-form parameter counts, computed from the configuration alone.
//!
//! Standard conv: `(3·3·f0 + 1)·f1`; depthwise stage: `10·f0`; pointwise
//! stage: `(f0 + 1)·f1`; batch norm: `2·c` trainable plus `2·c` running
//! statistics; classifier: `(c + 1)·classes`.

use serde::Serialize;

use crate::model::config::{BlockKind, ModelConfig};

/// Parameter total quoted for the reference 44-class model (13.95 lakh).
pub const REFERENCE_TOTAL: usize = 1_395_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub layer: String,
    pub kind: &'static str,
    pub in_channels: usize,
    pub out_channels: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamTable {
    pub rows: Vec<LayerCount>,
    pub trainable: usize,
    pub non_trainable: usize,
}

impl ParamTable {
    pub fn total(&self) -> usize {
        self.trainable + self.non_trainable
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<24} {:<10} {:>6} {:>6} {:>12} {:>14}\n",
            "layer", "kind", "in", "out", "trainable", "non-trainable"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:<10} {:>6} {:>6} {:>12} {:>14}\n",
                r.layer, r.kind, r.in_channels, r.out_channels, r.trainable, r.non_trainable
            ));
        }
        out.push_str(&format!(
            "total trainable {}  non-trainable {}  all {}  ({:.2} lakh trainable)\n",
            self.trainable,
            self.non_trainable,
            self.total(),
            self.trainable as f64 / 1e5
        ));
        out
    }
}

struct Counter {
    rows: Vec<LayerCount>,
}

impl Counter {
    fn row(&mut self, layer: String, kind: &'static str, f0: usize, f1: usize, trainable: usize, non_trainable: usize) {
        self.rows.push(LayerCount {
            layer,
            kind,
            in_channels: f0,
            out_channels: f1,
            trainable,
            non_trainable,
        });
    }

    fn conv(&mut self, name: String, f0: usize, f1: usize) {
        self.row(name, "conv3x3", f0, f1, (3 * 3 * f0 + 1) * f1, 0);
    }

    fn bn(&mut self, name: String, c: usize) {
        self.row(name, "batchnorm", c, c, 2 * c, 2 * c);
    }
}

pub fn count_params(cfg: &ModelConfig) -> ParamTable {
    let mut k = Counter { rows: Vec::new() };
    let mut channels = cfg.input_channels;
    let mut pcb_out: Vec<(usize, usize)> = Vec::new();

    for block in cfg.blocks() {
        let i = block.index;
        for (merge, c) in &pcb_out {
            if *merge == i {
                channels += c;
            }
        }
        match block.kind {
            BlockKind::StandardConv => {
                for n in 1..=block.convs_per_block {
                    k.conv(format!("block{i}/conv{n}"), channels, block.filters);
                    k.bn(format!("block{i}/bn{n}"), block.filters);
                    channels = block.filters;
                }
            }
            BlockKind::Dwsc => {
                k.row(format!("block{i}/dwsc.depthwise"), "depthwise", channels, channels, 10 * channels, 0);
                k.row(
                    format!("block{i}/dwsc.pointwise"),
                    "pointwise",
                    channels,
                    block.filters,
                    (channels + 1) * block.filters,
                    0,
                );
                k.bn(format!("block{i}/bn"), block.filters);
                channels = block.filters;
            }
        }
        for pcb in cfg.pcbs.iter().filter(|p| p.source_block == i) {
            let label = pcb.label();
            let width = match pcb.pre_pool_filters {
                // pooling keeps the channel count, so conv/pool order does not matter here
                Some(f) => {
                    k.conv(format!("{label}/conv"), channels, f);
                    k.bn(format!("{label}/bn"), f);
                    f
                }
                None => channels,
            };
            pcb_out.push((pcb.merge_before_block, width));
        }
    }
    k.row("dense".into(), "dense", channels, cfg.num_classes, (channels + 1) * cfg.num_classes, 0);

    let trainable = k.rows.iter().map(|r| r.trainable).sum();
    let non_trainable = k.rows.iter().map(|r| r.non_trainable).sum();
    ParamTable {
        rows: k.rows,
        trainable,
        non_trainable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_conv_and_depthwise_examples() {
        let t = count_params(&ModelConfig::default());
        let first = &t.rows[0];
        assert_eq!((first.in_channels, first.out_channels, first.trainable), (3, 21, 588));
        let dw = t.rows.iter().find(|r| r.layer == "block7/dwsc.depthwise").unwrap();
        assert_eq!((dw.in_channels, dw.trainable), (233, 2330));
    }

    #[test]
    fn deeper_and_wider_models_count_more() {
        let six = count_params(&ModelConfig::reference(6, 4).unwrap()).trainable;
        let seven = count_params(&ModelConfig::reference(7, 4).unwrap()).trainable;
        assert!(six < seven);
    }

    #[test]
    fn default_total_is_below_budget() {
        let t = count_params(&ModelConfig::default());
        assert!(t.trainable < 1_600_000, "{}", t.trainable);
    }
}
