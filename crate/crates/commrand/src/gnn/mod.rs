//! Minimal from-scratch GNN trainer over sampled batch subgraphs: GCN and
//! GraphSAGE-mean layers, softmax cross-entropy with a handwritten backward
//! pass, Adam, plateau LR scheduling, and early stopping.

mod adam;
mod model;
mod train;

pub use adam::Adam;
pub use model::{
    forward, gather_rows, loss_and_backward, normalize_adjacency, softmax_cross_entropy,
    Activations, Arch, BlockAdjacency, LayerParams, ModelConfig, ModelParams, Scalar,
};
pub use train::{
    evaluate, full_neighborhood_subgraph, load_checkpoint, save_checkpoint, train, TrainConfig,
    TrainOutcome, IMPROVEMENT_EPS,
};
