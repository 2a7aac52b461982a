//! Training loop: per-epoch batch stream, Adam updates in batch order,
//! full-neighborhood validation, plateau LR scheduling, early stopping.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::model::{
    forward, gather_rows, loss_and_backward, normalize_adjacency, Arch, BlockAdjacency,
    ModelConfig, ModelParams,
};
use crate::cache::{batch_access_order, LruSim};
use crate::community::CommunityAssignment;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::metrics::{feature_footprint, labels_per_batch, EpochReport};
use crate::minibatch::{BatchSubgraph, Block, Minibatcher, PartitionPolicy, SamplerConfig};

/// "Improvement" for early stopping and LR scheduling means
/// val_loss < best - IMPROVEMENT_EPS.
pub const IMPROVEMENT_EPS: f64 = 1e-6;

const BYTES_PER_FEATURE: usize = 4; // f32 storage
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub lr_plateau_patience: usize,
    pub lr_plateau_factor: f64,
    /// Seed for parameter initialization.
    #[serde(default)]
    pub param_seed: u64,
    /// Optional LRU feature-cache simulation (capacity in node slots);
    /// the cache persists across epochs.
    #[serde(default)]
    pub cache_capacity: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 5e-4,
            max_epochs: 100,
            early_stop_patience: 6,
            lr_plateau_patience: 3,
            lr_plateau_factor: 0.1,
            param_seed: 0,
            cache_capacity: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.early_stop_patience == 0 || self.lr_plateau_patience == 0 {
            return Err(Error::invalid("patience values must be positive"));
        }
        if !(0.0..1.0).contains(&self.lr_plateau_factor) || self.lr_plateau_factor <= 0.0 {
            return Err(Error::invalid("lr_plateau_factor must lie in (0, 1)"));
        }
        if self.lr <= 0.0 {
            return Err(Error::invalid("lr must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    /// Parameters at the best-val-loss epoch.
    pub params: ModelParams<f32>,
    pub reports: Vec<EpochReport>,
    /// Best-val-loss epoch (the convergence epoch); None when no epoch ran.
    pub best_epoch: Option<usize>,
}

pub fn train(
    dataset: &Dataset,
    assignment: &CommunityAssignment,
    policy: PartitionPolicy,
    sampler_cfg: &SamplerConfig,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    dataset.validate()?;
    model_cfg.validate()?;
    train_cfg.validate()?;
    if model_cfg.in_dim != dataset.feature_dim() {
        return Err(Error::shape(format!(
            "model in_dim {} != feature dim {}",
            model_cfg.in_dim,
            dataset.feature_dim()
        )));
    }
    if model_cfg.num_classes != dataset.num_classes {
        return Err(Error::shape(format!(
            "model classes {} != dataset classes {}",
            model_cfg.num_classes, dataset.num_classes
        )));
    }
    if model_cfg.num_layers != sampler_cfg.num_layers() {
        return Err(Error::shape(format!(
            "model has {} layers but sampler has {} fanouts",
            model_cfg.num_layers,
            sampler_cfg.num_layers()
        )));
    }

    let batcher = Minibatcher::new(
        &dataset.graph,
        assignment,
        &dataset.train,
        policy,
        sampler_cfg.clone(),
    )?;
    let mut params = ModelParams::<f32>::xavier(model_cfg, train_cfg.param_seed)?;
    let mut adam = Adam::new(&params);
    let mut cache = match train_cfg.cache_capacity {
        Some(capacity) => Some(LruSim::new(capacity)?),
        None => None,
    };

    let mut lr = train_cfg.lr;
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut best_epoch = None;
    let mut lr_bad_epochs = 0usize;
    let mut stop_bad_epochs = 0usize;
    let mut reports = Vec::new();
    let feature_dim = dataset.feature_dim();

    for epoch in 0..train_cfg.max_epochs {
        let wall = Instant::now();
        let mut loss_sum = 0.0f64;
        let mut root_count = 0usize;
        let mut footprint_sum = 0usize;
        let mut bytes_sum = 0usize;
        let mut label_sum = 0usize;
        let mut batch_count = 0usize;
        let mut epoch_cache = CacheWindow::new(&mut cache);

        for sub in batcher.epoch(epoch)? {
            let adjs: Vec<BlockAdjacency<f32>> = sub
                .blocks
                .iter()
                .map(|b| normalize_adjacency(b, model_cfg.arch))
                .collect();
            let x = gather_rows::<f32>(&dataset.features, sub.input_nodes());
            let (_, acts) = forward(&params, &adjs, &x)?;
            let labels = root_labels(dataset, &sub.roots)?;
            let (loss, mut grads) = loss_and_backward(&params, &adjs, &acts, &labels)?;
            if train_cfg.weight_decay > 0.0 {
                apply_weight_decay(&mut grads, &params, train_cfg.weight_decay as f32);
            }
            adam.step(&mut params, &grads, lr as f32);

            loss_sum += loss as f64 * sub.roots.len() as f64;
            root_count += sub.roots.len();
            let (unique, bytes) = feature_footprint(&sub, feature_dim, BYTES_PER_FEATURE);
            footprint_sum += unique;
            bytes_sum += bytes;
            label_sum += labels_per_batch(&sub.roots, &dataset.labels)?;
            batch_count += 1;
            epoch_cache.feed(&sub);
        }
        let cache_miss_rate = epoch_cache.epoch_miss_rate();
        let epoch_wall_time_s = wall.elapsed().as_secs_f64();

        let (val_loss, val_acc) = evaluate(&params, dataset, &dataset.val)?;
        reports.push(EpochReport {
            epoch,
            train_loss: loss_sum / root_count.max(1) as f64,
            val_loss,
            val_acc,
            mean_input_nodes: footprint_sum as f64 / batch_count.max(1) as f64,
            mean_feature_bytes: bytes_sum as f64 / batch_count.max(1) as f64,
            mean_labels_per_batch: label_sum as f64 / batch_count.max(1) as f64,
            epoch_wall_time_s,
            cache_miss_rate,
            lr,
        });

        if val_loss < best_val - IMPROVEMENT_EPS {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = Some(epoch);
            lr_bad_epochs = 0;
            stop_bad_epochs = 0;
        } else {
            lr_bad_epochs += 1;
            stop_bad_epochs += 1;
            if lr_bad_epochs > train_cfg.lr_plateau_patience {
                lr *= train_cfg.lr_plateau_factor;
                lr_bad_epochs = 0;
            }
            if stop_bad_epochs >= train_cfg.early_stop_patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        reports,
        best_epoch,
    })
}

/// Epoch-scoped view over the optional persistent cache, tracking the
/// epoch's own miss deltas.
struct CacheWindow<'a> {
    cache: &'a mut Option<LruSim>,
    start: Option<(u64, u64)>,
}

impl<'a> CacheWindow<'a> {
    fn new(cache: &'a mut Option<LruSim>) -> Self {
        let start = cache
            .as_ref()
            .map(|c| (c.stats().accesses, c.stats().misses));
        CacheWindow { cache, start }
    }

    fn feed(&mut self, sub: &BatchSubgraph) {
        if let Some(cache) = self.cache.as_mut() {
            for id in batch_access_order(sub) {
                cache.access(id);
            }
        }
    }

    fn epoch_miss_rate(&self) -> Option<f64> {
        let cache = self.cache.as_ref()?;
        let (a0, m0) = self.start?;
        let stats = cache.stats();
        let accesses = stats.accesses - a0;
        if accesses == 0 {
            return Some(0.0);
        }
        Some((stats.misses - m0) as f64 / accesses as f64)
    }
}

fn root_labels(dataset: &Dataset, roots: &[NodeId]) -> Result<Vec<usize>> {
    roots
        .iter()
        .map(|&v| dataset.labels[v].ok_or_else(|| Error::invalid(format!("node {v} is unlabeled"))))
        .collect()
}

fn apply_weight_decay(grads: &mut ModelParams<f32>, params: &ModelParams<f32>, lambda: f32) {
    for (g, p) in grads.layers.iter_mut().zip(&params.layers) {
        g.w_neigh.scaled_add(lambda, &p.w_neigh);
        if let (Some(gs), Some(ps)) = (g.w_self.as_mut(), p.w_self.as_ref()) {
            gs.scaled_add(lambda, ps);
        }
    }
}

/// Deterministic full-neighborhood blocks for the given roots: every layer
/// takes all neighbors plus the self edge, no sampling.
pub fn full_neighborhood_subgraph(g: &Graph, roots: &[NodeId], num_layers: usize) -> BatchSubgraph {
    let mut frontier: Vec<NodeId> = roots.to_vec();
    let mut blocks_rev = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let mut local: HashMap<NodeId, usize> = HashMap::with_capacity(frontier.len() * 2);
        let mut src_nodes: Vec<NodeId> = Vec::with_capacity(frontier.len() * 2);
        for (i, &v) in frontier.iter().enumerate() {
            local.insert(v, i);
            src_nodes.push(v);
        }
        let mut edges = Vec::new();
        for (d, &v) in frontier.iter().enumerate() {
            edges.push((d, d)); // self edge
            for &u in g.neighbors(v) {
                if u == v {
                    continue;
                }
                let s = *local.entry(u).or_insert_with(|| {
                    src_nodes.push(u);
                    src_nodes.len() - 1
                });
                edges.push((s, d));
            }
        }
        blocks_rev.push(Block {
            src_nodes: src_nodes.clone(),
            dst_nodes: frontier,
            edges,
        });
        frontier = src_nodes;
    }
    blocks_rev.reverse();
    BatchSubgraph {
        roots: roots.to_vec(),
        blocks: blocks_rev,
    }
}

/// Full-neighborhood deterministic inference over `nodes`: mean
/// cross-entropy and argmax accuracy. Runs in fixed-size chunks; the result
/// is invariant to the chunking.
pub fn evaluate(
    params: &ModelParams<f32>,
    dataset: &Dataset,
    nodes: &[NodeId],
) -> Result<(f64, f64)> {
    evaluate_chunked(params, dataset, nodes, EVAL_CHUNK)
}

pub(crate) fn evaluate_chunked(
    params: &ModelParams<f32>,
    dataset: &Dataset,
    nodes: &[NodeId],
    chunk_size: usize,
) -> Result<(f64, f64)> {
    if nodes.is_empty() {
        return Err(Error::invalid("evaluate needs a non-empty node set"));
    }
    let num_layers = params.cfg.num_layers;
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    for chunk in nodes.chunks(chunk_size.max(1)) {
        let sub = full_neighborhood_subgraph(&dataset.graph, chunk, num_layers);
        let adjs: Vec<BlockAdjacency<f32>> = sub
            .blocks
            .iter()
            .map(|b| normalize_adjacency(b, params.cfg.arch))
            .collect();
        let x = gather_rows::<f32>(&dataset.features, sub.input_nodes());
        let (logits, _) = forward(params, &adjs, &x)?;
        for (i, &v) in chunk.iter().enumerate() {
            let label = dataset.labels[v]
                .ok_or_else(|| Error::invalid(format!("node {v} is unlabeled")))?;
            let row = logits.row(i);
            loss_sum += cross_entropy_f64(row.as_slice().expect("contiguous"), label);
            let pred = argmax(row.as_slice().unwrap());
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok((
        loss_sum / nodes.len() as f64,
        correct as f64 / nodes.len() as f64,
    ))
}

fn cross_entropy_f64(row: &[f32], label: usize) -> f64 {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let denom: f64 = row.iter().map(|&x| (x as f64 - max).exp()).sum();
    -(row[label] as f64 - max) + denom.ln()
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Checkpoint layout: u64 little-endian JSON header length, JSON header with
/// the model config and tensor shapes, then f32 little-endian tensor data in
/// header order. Round-trips bit-exactly.
pub fn save_checkpoint(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct TensorMeta<'a> {
        name: String,
        shape: Vec<usize>,
        #[serde(skip)]
        _marker: std::marker::PhantomData<&'a ()>,
    }
    #[derive(Serialize)]
    struct Header<'a> {
        config: &'a ModelConfig,
        tensors: Vec<TensorMeta<'a>>,
    }
    let mut tensors = Vec::new();
    let mut data: Vec<f32> = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        tensors.push(TensorMeta {
            name: format!("layer{l}.w_neigh"),
            shape: layer.w_neigh.shape().to_vec(),
            _marker: Default::default(),
        });
        data.extend(layer.w_neigh.iter());
        if let Some(w_self) = &layer.w_self {
            tensors.push(TensorMeta {
                name: format!("layer{l}.w_self"),
                shape: w_self.shape().to_vec(),
                _marker: Default::default(),
            });
            data.extend(w_self.iter());
        }
        tensors.push(TensorMeta {
            name: format!("layer{l}.bias"),
            shape: vec![layer.bias.len()],
            _marker: Default::default(),
        });
        data.extend(layer.bias.iter());
    }
    let header = serde_json::to_vec(&Header {
        config: &params.cfg,
        tensors,
    })?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for x in data {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    #[derive(Deserialize)]
    struct TensorMeta {
        name: String,
        shape: Vec<usize>,
    }
    #[derive(Deserialize)]
    struct Header {
        config: ModelConfig,
        tensors: Vec<TensorMeta>,
    }
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;

    let mut read_tensor = |shape: &[usize]| -> Result<Vec<f32>> {
        let count: usize = shape.iter().product();
        let mut bytes = vec![0u8; count * 4];
        f.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    };

    let mut by_name: HashMap<String, Array2<f32>> = HashMap::new();
    let mut biases: HashMap<String, Vec<f32>> = HashMap::new();
    for meta in &header.tensors {
        let values = read_tensor(&meta.shape)?;
        if meta.shape.len() == 2 {
            let arr = Array2::from_shape_vec((meta.shape[0], meta.shape[1]), values)
                .map_err(|e| Error::shape(format!("checkpoint tensor {}: {e}", meta.name)))?;
            by_name.insert(meta.name.clone(), arr);
        } else {
            biases.insert(meta.name.clone(), values);
        }
    }

    let cfg = header.config;
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let w_neigh = by_name
            .remove(&format!("layer{l}.w_neigh"))
            .ok_or_else(|| Error::invalid(format!("checkpoint missing layer{l}.w_neigh")))?;
        let w_self = by_name.remove(&format!("layer{l}.w_self"));
        if matches!(cfg.arch, Arch::SageMean) && w_self.is_none() {
            return Err(Error::invalid(format!(
                "checkpoint missing layer{l}.w_self"
            )));
        }
        let bias = biases
            .remove(&format!("layer{l}.bias"))
            .ok_or_else(|| Error::invalid(format!("checkpoint missing layer{l}.bias")))?;
        layers.push(super::model::LayerParams {
            w_neigh,
            w_self,
            bias: ndarray::Array1::from_vec(bias),
        });
    }
    Ok(ModelParams { cfg, layers })
}
