//! End-to-end orchestration: block partitioning, training, evaluation
//! metrics, inference and the Chebyshev-order sweep.

pub mod blocks;
pub mod metrics;
pub mod train;

pub use blocks::{block_labels, partition_blocks, TrainConfig};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use train::{
    evaluate, evaluate_blocks, predict, prepare_block, prepare_clouds, sweep_cheb_order, train,
    EvalRecord, PreparedBlock, SweepRow, TrainResult,
};
