//! Fibonacci-Net construction, execution, parameter accounting and
//! checkpoints.

mod checkpoint;
mod config;
mod count;
mod graph;
mod params;

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, Manifest, TensorRecord, TrainingState,
    MANIFEST, WEIGHTS,
};
pub use config::{
    fibonacci_from, fibonacci_schedule, BlockKind, BlockSpec, ModelConfig, PcbOrder, PcbSpec,
    LAST_DOWNSAMPLING_BLOCK, MAX_BLOCKS, REFERENCE_SCHEDULE,
};
pub use count::{count_params, LayerCount, ParamTable, REFERENCE_TOTAL};
pub use graph::{build_model, Backprop, ForwardCache, Network, Node, NodeId, Op};
pub use params::{ParamEntry, ParamId, ParamStore};
