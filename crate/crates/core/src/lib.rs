//! Inference, zero-channel pruning and feature transforms for universal style transfer.

pub mod bench;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod metrics;
pub mod ops;
pub mod pipeline;
pub mod prune;
pub mod tensor;
pub mod transform;

pub use bench::{benchmark, BenchConfig, BenchResult};
pub use error::{Error, Result};
pub use graph::{load_model_dir, save_model_dir, Graph, GraphBuilder, Node, Op};
pub use metrics::{edge_ssim, gram, gram_distance, GramMatrix};
pub use pipeline::{read_image, stylize, write_image, StyleJob};
pub use prune::{prune_graph, KeepMask, PruneConfig, PruneReport};
pub use tensor::{channel_stats, ChannelStats, Shape4, Tensor4};
pub use transform::{adain, sandwich_swap, style_swap, TransferConfig, TransferMode};
