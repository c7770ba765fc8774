use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{DEFAULT_EPSILON, DEFAULT_MOMENTUM};

/// Block widths of the reference network.
pub const REFERENCE_SCHEDULE: [usize; 8] = [21, 34, 55, 89, 144, 233, 377, 610];

pub const MAX_BLOCKS: usize = 8;

/// Blocks up to this index end with 2×2 stride-2 max pooling.
pub const LAST_DOWNSAMPLING_BLOCK: usize = 5;

/// First `n` widths of the reference schedule `21, 34, 55, …`.
pub fn fibonacci_schedule(n: usize) -> Result<Vec<usize>> {
    fibonacci_from((REFERENCE_SCHEDULE[0], REFERENCE_SCHEDULE[1]), n)
}

/// First `n` terms of the Fibonacci recurrence started from `seed`.
pub fn fibonacci_from(seed: (usize, usize), n: usize) -> Result<Vec<usize>> {
    if !(1..=MAX_BLOCKS).contains(&n) {
        return Err(Error::OutOfRange {
            what: "block count",
            value: n,
            min: 1,
            max: MAX_BLOCKS,
        });
    }
    let mut out = vec![seed.0, seed.1];
    while out.len() < n {
        let k = out.len();
        out.push(out[k - 1] + out[k - 2]);
    }
    out.truncate(n);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    StandardConv,
    Dwsc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    /// 1-based.
    pub index: usize,
    pub filters: usize,
    pub kind: BlockKind,
    pub convs_per_block: usize,
    pub downsample: bool,
}

/// A parallel concatenation block: taps the output of `source_block`,
/// transforms it with Avg-2Max pooling (optionally with a 3×3 conv + BN +
/// ReLU of `pre_pool_filters` channels) and concatenates the result onto
/// the input of `merge_before_block`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcbSpec {
    pub source_block: usize,
    pub merge_before_block: usize,
    pub pre_pool_filters: Option<usize>,
}

impl PcbSpec {
    pub const fn new(source_block: usize, pre_pool_filters: Option<usize>) -> Self {
        PcbSpec {
            source_block,
            merge_before_block: source_block + 2,
            pre_pool_filters,
        }
    }

    pub fn label(&self) -> String {
        format!("pcb{}-{}", self.source_block, self.merge_before_block)
    }
}

/// Where the optional conv of a pcb sits relative to its Avg-2Max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcbOrder {
    #[default]
    ConvThenPool,
    PoolThenConv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub filter_schedule: Vec<usize>,
    pub pcbs: Vec<PcbSpec>,
    #[serde(default)]
    pub pcb_order: PcbOrder,
    pub num_classes: usize,
    pub input_size: usize,
    pub input_channels: usize,
    pub convs_per_block: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for ModelConfig {
    /// Seven blocks, 44 classes, both pcbs.
    fn default() -> Self {
        ModelConfig::reference(7, 44).expect("default config is valid")
    }
}

impl ModelConfig {
    /// Default pcb wiring: 2→4 (pooling only) and 3→5 (24-filter conv).
    pub fn default_pcbs() -> Vec<PcbSpec> {
        vec![PcbSpec::new(2, None), PcbSpec::new(3, Some(24))]
    }

    /// Reference architecture with `num_blocks` blocks of the 21, 34, …
    /// schedule at 224×224 input.
    pub fn reference(num_blocks: usize, num_classes: usize) -> Result<Self> {
        let cfg = ModelConfig {
            num_blocks,
            filter_schedule: fibonacci_schedule(num_blocks)?,
            pcbs: Self::default_pcbs(),
            pcb_order: PcbOrder::ConvThenPool,
            num_classes,
            input_size: 224,
            input_channels: 3,
            convs_per_block: 2,
            bn_momentum: DEFAULT_MOMENTUM,
            bn_epsilon: DEFAULT_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same topology with a smaller Fibonacci seed and input size, for
    /// desk-scale experiments.
    pub fn scaled(
        num_blocks: usize,
        num_classes: usize,
        seed: (usize, usize),
        input_size: usize,
        pcb_filters: usize,
    ) -> Result<Self> {
        let mut cfg = ModelConfig {
            filter_schedule: fibonacci_from(seed, num_blocks)?,
            input_size,
            ..ModelConfig::reference(num_blocks.max(6), num_classes)?
        };
        cfg.num_blocks = num_blocks;
        cfg.pcbs = Self::default_pcbs()
            .into_iter()
            .filter(|p| p.merge_before_block <= num_blocks)
            .map(|p| PcbSpec {
                pre_pool_filters: p.pre_pool_filters.map(|_| pcb_filters),
                ..p
            })
            .collect();
        cfg.validate()?;
        Ok(cfg)
    }

    /// The ablation base model: identical blocks, no pcbs.
    pub fn without_pcbs(&self) -> Self {
        ModelConfig {
            pcbs: Vec::new(),
            ..self.clone()
        }
    }

    pub fn blocks(&self) -> Vec<BlockSpec> {
        (1..=self.num_blocks)
            .map(|index| {
                let dwsc = index + 2 > self.num_blocks;
                BlockSpec {
                    index,
                    filters: self.filter_schedule[index - 1],
                    kind: if dwsc {
                        BlockKind::Dwsc
                    } else {
                        BlockKind::StandardConv
                    },
                    convs_per_block: if dwsc { 1 } else { self.convs_per_block },
                    downsample: index <= LAST_DOWNSAMPLING_BLOCK,
                }
            })
            .collect()
    }

    /// Checks every invariant that does not need shape inference; spatial
    /// agreement at merges is checked when the graph is built.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(1..=MAX_BLOCKS).contains(&self.num_blocks) {
            return fail(format!("num_blocks must be in 1..={MAX_BLOCKS}, got {}", self.num_blocks));
        }
        if self.filter_schedule.len() != self.num_blocks {
            return fail(format!(
                "filter_schedule has {} entries for {} blocks",
                self.filter_schedule.len(),
                self.num_blocks
            ));
        }
        if self.filter_schedule.contains(&0) {
            return fail("filter counts must be >= 1".into());
        }
        for i in 2..self.filter_schedule.len() {
            let s = &self.filter_schedule;
            if s[i] != s[i - 1] + s[i - 2] {
                return fail(format!(
                    "filter_schedule breaks the Fibonacci recurrence at block {}: {} != {} + {}",
                    i + 1,
                    s[i],
                    s[i - 1],
                    s[i - 2]
                ));
            }
        }
        if self.num_classes < 2 {
            return fail("num_classes must be >= 2".into());
        }
        if self.input_size == 0 || self.input_channels == 0 {
            return fail("input size and channels must be >= 1".into());
        }
        if self.convs_per_block == 0 {
            return fail("convs_per_block must be >= 1".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return fail(format!("bn_momentum must be in (0,1), got {}", self.bn_momentum));
        }
        if self.bn_epsilon.is_nan() || self.bn_epsilon <= 0.0 {
            return fail("bn_epsilon must be positive".into());
        }
        for p in &self.pcbs {
            if p.source_block == 0 || p.merge_before_block != p.source_block + 2 {
                return fail(format!(
                    "{}: a pcb must merge exactly two blocks after its source",
                    p.label()
                ));
            }
            if p.merge_before_block > self.num_blocks {
                return fail(format!(
                    "{}: merge block {} does not exist in a {}-block model",
                    p.label(),
                    p.merge_before_block,
                    self.num_blocks
                ));
            }
            if p.pre_pool_filters == Some(0) {
                return fail(format!("{}: pre_pool_filters must be >= 1", p.label()));
            }
        }
        Ok(())
    }
}
