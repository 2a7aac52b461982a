//! Mini-batch construction: root-node partitioning policies and biased
//! L-layer neighborhood sampling.
//!
//! Root partitioning supports uniform shuffling, static (no shuffle)
//! ordering, and community-aware randomization where whole communities are
//! shuffled as blocks, grouped into super-blocks, and shuffled within each
//! super-block. Neighborhood sampling weights intra-community edges `p` and
//! inter-community edges `1 - p`, sampling without replacement via
//! exponential keys. Per-batch rng streams derive from (seed, epoch, batch),
//! so batches can be built in any order without changing their contents.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::community::CommunityAssignment;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::sbm::shuffle;
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartitionPolicy {
    /// Uniform random shuffle of the training set each epoch.
    RandRoots,
    /// Ascending node-id order; static across epochs.
    NorandRoots,
    /// Shuffle communities as blocks, group `round(mix_fraction * k)` of
    /// them per super-block, shuffle contents within each super-block.
    CommRandMix { mix_fraction: f64 },
}

impl PartitionPolicy {
    pub fn validate(&self) -> Result<()> {
        if let PartitionPolicy::CommRandMix { mix_fraction } = self {
            if !(0.0..=1.0).contains(mix_fraction) {
                return Err(Error::invalid(format!(
                    "mix_fraction {mix_fraction} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Stable name used in CSV output and CLI flags.
    pub fn name(&self) -> &'static str {
        match self {
            PartitionPolicy::RandRoots => "rand-roots",
            PartitionPolicy::NorandRoots => "norand-roots",
            PartitionPolicy::CommRandMix { .. } => "comm-rand-mix",
        }
    }

    pub fn mix_fraction(&self) -> Option<f64> {
        match self {
            PartitionPolicy::CommRandMix { mix_fraction } => Some(*mix_fraction),
            _ => None,
        }
    }
}

impl std::fmt::Display for PartitionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PartitionPolicy::CommRandMix { mix_fraction } => {
                write!(f, "comm-rand-mix({mix_fraction})")
            }
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Per-layer fanouts, input side first; length is the number of layers.
    pub fanouts: Vec<usize>,
    /// Intra-community sampling probability p in [0.5, 1.0].
    pub intra_prob: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fanouts.is_empty() {
            return Err(Error::invalid("need at least one layer"));
        }
        if self.fanouts.contains(&0) {
            return Err(Error::invalid("fanouts must be at least 1"));
        }
        if !(0.5..=1.0).contains(&self.intra_prob) {
            return Err(Error::invalid(format!(
                "intra_prob {} outside [0.5, 1.0]",
                self.intra_prob
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.fanouts.len()
    }
}

/// Ordered root-node batches for one epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BatchPlan {
    pub epoch: usize,
    pub batches: Vec<Vec<NodeId>>,
}

impl BatchPlan {
    pub fn to_debug_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }
}

/// One layer's sampled bipartite structure. `src_nodes[0..dst_nodes.len()]`
/// equals `dst_nodes`, so destination rows prefix source rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub src_nodes: Vec<NodeId>,
    pub dst_nodes: Vec<NodeId>,
    /// (src_local, dst_local) pairs; every dst has its self edge.
    pub edges: Vec<(usize, usize)>,
}

impl Block {
    pub fn num_src(&self) -> usize {
        self.src_nodes.len()
    }

    pub fn num_dst(&self) -> usize {
        self.dst_nodes.len()
    }
}

/// L sampled blocks with local relabeling; the unit of training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchSubgraph {
    pub roots: Vec<NodeId>,
    /// blocks[0] touches the input features; blocks[L-1] produces the roots.
    pub blocks: Vec<Block>,
}

impl BatchSubgraph {
    /// Global ids whose feature rows feed layer 0 (deduplicated).
    pub fn input_nodes(&self) -> &[NodeId] {
        &self.blocks[0].src_nodes
    }

    pub fn num_layers(&self) -> usize {
        self.blocks.len()
    }

    /// Check the structural invariants; used by tests and debug assertions.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::invalid("subgraph has no blocks"));
        }
        if self.blocks.last().unwrap().dst_nodes != self.roots {
            return Err(Error::invalid("last block dst != roots"));
        }
        for (l, block) in self.blocks.iter().enumerate() {
            if block.src_nodes[..block.num_dst()] != block.dst_nodes[..] {
                return Err(Error::invalid(format!(
                    "block {l}: dst not a prefix of src"
                )));
            }
            let mut has_self = vec![false; block.num_dst()];
            for &(s, d) in &block.edges {
                if s >= block.num_src() || d >= block.num_dst() {
                    return Err(Error::invalid(format!("block {l}: edge out of range")));
                }
                if s == d {
                    has_self[d] = true;
                }
            }
            if !has_self.iter().all(|&x| x) {
                return Err(Error::invalid(format!("block {l}: missing self edge")));
            }
            if l + 1 < self.blocks.len() && self.blocks[l + 1].src_nodes != block.dst_nodes {
                // blocks chain input-side to root-side
                return Err(Error::invalid(format!("block {l}: dst != next block src")));
            }
        }
        Ok(())
    }

    /// Debug dump with edges in global ids, for oracle tests.
    pub fn to_debug_json(&self) -> String {
        #[derive(Serialize)]
        struct DumpBlock {
            edges: Vec<(NodeId, NodeId)>,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            roots: &'a [NodeId],
            input_nodes: &'a [NodeId],
            blocks: Vec<DumpBlock>,
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| DumpBlock {
                edges: b
                    .edges
                    .iter()
                    .map(|&(s, d)| (b.src_nodes[s], b.dst_nodes[d]))
                    .collect(),
            })
            .collect();
        serde_json::to_string(&Dump {
            roots: &self.roots,
            input_nodes: self.input_nodes(),
            blocks,
        })
        .expect("subgraph serializes")
    }
}

/// Split the training set into root batches under `policy`.
///
/// `train_communities` must be the community assignment restricted to the
/// training set (only consulted by the community-aware policy).
pub fn partition_roots(
    train: &[NodeId],
    train_communities: &CommunityAssignment,
    policy: PartitionPolicy,
    batch_size: usize,
    epoch: usize,
    epoch_seed: u64,
) -> Result<BatchPlan> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    policy.validate()?;

    let mut order: Vec<NodeId> = train.to_vec();
    order.sort_unstable();

    match policy {
        PartitionPolicy::NorandRoots => {}
        PartitionPolicy::RandRoots => {
            let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
            shuffle(&mut order, &mut rng);
        }
        PartitionPolicy::CommRandMix { mix_fraction } => {
            let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
            let mut communities = train_communities.members_by_community();
            communities.retain(|c| !c.is_empty());
            if communities.iter().map(|c| c.len()).sum::<usize>() != order.len() {
                return Err(Error::invalid(
                    "train_communities does not cover the training set exactly",
                ));
            }
            let num_communities = communities.len();
            shuffle(&mut communities, &mut rng);
            let block_len = ((mix_fraction * num_communities as f64).round() as usize).max(1);
            order.clear();
            for super_block in communities.chunks(block_len) {
                let mut pool: Vec<NodeId> =
                    super_block.iter().flat_map(|c| c.iter().copied()).collect();
                shuffle(&mut pool, &mut rng);
                order.extend_from_slice(&pool);
            }
        }
    }

    let batches = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    Ok(BatchPlan { epoch, batches })
}

/// Sample up to `fanout` in-neighbors per frontier node without replacement,
/// weighting intra-community edges `p` and inter-community edges `1 - p`.
/// Zero-weight edges are excluded entirely. Every frontier node also emits
/// its own self edge. Returns (neighbor, frontier-node) pairs in global ids.
pub fn sample_layer(
    g: &Graph,
    a: &CommunityAssignment,
    frontier: &[NodeId],
    fanout: usize,
    intra_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::with_capacity(frontier.len() * (fanout + 1));
    let mut keyed: Vec<(f64, NodeId)> = Vec::new();
    for &v in frontier {
        edges.push((v, v));
        let cv = a.community_of(v).expect("sampling needs a full assignment");
        keyed.clear();
        for &u in g.neighbors(v) {
            let w = if a.community_of(u) == Some(cv) {
                intra_prob
            } else {
                1.0 - intra_prob
            };
            // One uniform per edge keeps the rng stream aligned regardless
            // of how many edges are admissible.
            let uniform: f64 = rng.random();
            if w <= 0.0 {
                continue;
            }
            // exponential key; the r smallest keys win
            let key = -(1.0 - uniform).ln() / w;
            keyed.push((key, u));
        }
        let take = fanout.min(keyed.len());
        if take < keyed.len() {
            keyed.select_nth_unstable_by(take - 1, |a, b| a.0.total_cmp(&b.0));
        }
        let mut chosen: Vec<NodeId> = keyed[..take].iter().map(|&(_, u)| u).collect();
        chosen.sort_unstable();
        for u in chosen {
            if u != v {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Build the L-layer subgraph for one batch of roots, sampling from the root
/// side outward.
pub fn build_subgraph(
    g: &Graph,
    a: &CommunityAssignment,
    roots: &[NodeId],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> BatchSubgraph {
    let num_layers = cfg.num_layers();
    let mut frontier: Vec<NodeId> = roots.to_vec();
    let mut blocks_rev: Vec<Block> = Vec::with_capacity(num_layers);

    for layer in (0..num_layers).rev() {
        let sampled = sample_layer(g, a, &frontier, cfg.fanouts[layer], cfg.intra_prob, rng);
        let mut local: HashMap<NodeId, usize> = HashMap::with_capacity(frontier.len() * 2);
        let mut src_nodes: Vec<NodeId> = Vec::with_capacity(frontier.len() * 2);
        for (i, &v) in frontier.iter().enumerate() {
            local.insert(v, i);
            src_nodes.push(v);
        }
        let mut edges = Vec::with_capacity(sampled.len());
        for (src, dst) in sampled {
            let d = local[&dst];
            let s = *local.entry(src).or_insert_with(|| {
                src_nodes.push(src);
                src_nodes.len() - 1
            });
            edges.push((s, d));
        }
        blocks_rev.push(Block {
            src_nodes: src_nodes.clone(),
            dst_nodes: frontier,
            edges,
        });
        frontier = src_nodes;
    }

    blocks_rev.reverse();
    let sub = BatchSubgraph {
        roots: roots.to_vec(),
        blocks: blocks_rev,
    };
    debug_assert!(sub.validate().is_ok());
    sub
}

/// Epoch-level batch producer combining [`partition_roots`] and
/// [`build_subgraph`] with derived seeds.
pub struct Minibatcher<'a> {
    graph: &'a Graph,
    assignment: &'a CommunityAssignment,
    train_communities: CommunityAssignment,
    train: Vec<NodeId>,
    policy: PartitionPolicy,
    cfg: SamplerConfig,
}

impl<'a> Minibatcher<'a> {
    pub fn new(
        graph: &'a Graph,
        assignment: &'a CommunityAssignment,
        train: &[NodeId],
        policy: PartitionPolicy,
        cfg: SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        policy.validate()?;
        if !assignment.is_complete() || assignment.len() != graph.num_nodes() {
            return Err(Error::invalid(
                "minibatcher needs a community assignment covering every node",
            ));
        }
        let train_communities = assignment.restrict_to(train)?;
        let mut train = train.to_vec();
        train.sort_unstable();
        Ok(Minibatcher {
            graph,
            assignment,
            train_communities,
            train,
            policy,
            cfg,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn num_train_communities(&self) -> usize {
        self.train_communities.num_communities()
    }

    pub fn plan(&self, epoch: usize) -> Result<BatchPlan> {
        partition_roots(
            &self.train,
            &self.train_communities,
            self.policy,
            self.cfg.batch_size,
            epoch,
            seeds::epoch_seed(self.cfg.seed, epoch),
        )
    }

    /// Rebuild one batch's subgraph from its (epoch, index, roots) triple;
    /// independent of any other batch.
    pub fn subgraph(&self, epoch: usize, batch_index: usize, roots: &[NodeId]) -> BatchSubgraph {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::batch_seed(self.cfg.seed, epoch, batch_index));
        build_subgraph(self.graph, self.assignment, roots, &self.cfg, &mut rng)
    }

    /// Stream of the epoch's batch subgraphs in batch-index order.
    pub fn epoch(&self, epoch: usize) -> Result<EpochBatches<'_, 'a>> {
        let plan = self.plan(epoch)?;
        Ok(EpochBatches {
            batcher: self,
            plan,
            next: 0,
        })
    }
}

pub struct EpochBatches<'b, 'a> {
    batcher: &'b Minibatcher<'a>,
    plan: BatchPlan,
    next: usize,
}

impl EpochBatches<'_, '_> {
    pub fn plan(&self) -> &BatchPlan {
        &self.plan
    }
}

impl Iterator for EpochBatches<'_, '_> {
    type Item = BatchSubgraph;

    fn next(&mut self) -> Option<BatchSubgraph> {
        if self.next >= self.plan.batches.len() {
            return None;
        }
        let idx = self.next;
        self.next += 1;
        Some(
            self.batcher
                .subgraph(self.plan.epoch, idx, &self.plan.batches[idx]),
        )
    }
}
