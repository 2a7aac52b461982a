//! Community-structure-aware randomized mini-batching for GNN training.
//!
//! A desk-scale laboratory covering the full pipeline: graph ingestion and
//! synthetic SBM generation, modularity-based community detection, community
//! reordering, biased root partitioning and biased neighborhood sampling,
//! a from-scratch GNN trainer, and the instrumentation (feature footprint,
//! label diversity, LRU cache simulation) that exposes the locality vs
//! convergence trade-off.

pub mod cache;
pub mod community;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod minibatch;
pub mod sbm;
pub mod seeds;
pub mod stats;

pub use community::{louvain, louvain_trace, modularity, CommunityAssignment};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use graph::{load_edge_list, Graph, NodeId, Permutation};
pub use minibatch::{BatchPlan, BatchSubgraph, Minibatcher, PartitionPolicy, SamplerConfig};
pub use sbm::{gen_sbm, SbmConfig};
