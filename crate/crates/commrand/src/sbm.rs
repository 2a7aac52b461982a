//! Stochastic-block-model generator for desk-scale experiments.
//!
//! Node ids are grouped by community (community c occupies a consecutive id
//! range), so freshly generated bundles are already community-ordered.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

fn default_train_frac() -> f64 {
    0.6
}

fn default_val_frac() -> f64 {
    0.2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SbmConfig {
    pub community_sizes: Vec<usize>,
    /// Intra-community edge probability.
    pub p_in: f64,
    /// Inter-community edge probability.
    pub p_out: f64,
    pub feature_dim: usize,
    /// Euclidean distance between any two per-community feature means.
    pub feature_signal: f64,
    /// Probability that a node's label is replaced by a uniform random class.
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,
}

impl SbmConfig {
    pub fn num_communities(&self) -> usize {
        self.community_sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.community_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.community_sizes.is_empty() || self.community_sizes.contains(&0) {
            return Err(Error::invalid("community sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_out) || !(0.0..=1.0).contains(&self.p_in) {
            return Err(Error::invalid("edge probabilities must lie in [0, 1]"));
        }
        if self.p_out > self.p_in {
            return Err(Error::invalid("p_out must not exceed p_in"));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::invalid("label_noise must lie in [0, 1)"));
        }
        if self.train_frac <= 0.0 || self.val_frac < 0.0 || self.train_frac + self.val_frac > 1.0 {
            return Err(Error::invalid(
                "split fractions must satisfy 0 < train, train+val <= 1",
            ));
        }
        Ok(())
    }
}

/// Visit the hit indices of a Bernoulli(p) process over `len` slots using
/// geometric skips, so sparse blocks cost O(hits) instead of O(len).
fn bernoulli_hits(len: u64, p: f64, rng: &mut ChaCha8Rng, mut visit: impl FnMut(u64)) {
    if p <= 0.0 || len == 0 {
        return;
    }
    if p >= 1.0 {
        for i in 0..len {
            visit(i);
        }
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut i: u64 = 0;
    loop {
        let u: f64 = rng.random::<f64>();
        // skip ~ Geometric(p): number of misses before the next hit
        let skip = ((1.0 - u).ln() / log_q).floor() as u64;
        i = match i.checked_add(skip) {
            Some(x) => x,
            None => return,
        };
        if i >= len {
            return;
        }
        visit(i);
        i += 1;
    }
}

pub fn gen_sbm(cfg: &SbmConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.num_communities();
    let n = cfg.num_nodes();

    let mut community_start = Vec::with_capacity(k + 1);
    let mut acc = 0;
    for &s in &cfg.community_sizes {
        community_start.push(acc);
        acc += s;
    }
    community_start.push(acc);
    let community_of = |v: NodeId| -> usize { community_start.partition_point(|&s| s <= v) - 1 };

    // Edges: intra blocks first (triangular index space), then inter blocks
    // for each ordered community pair (a < b), in a fixed order.
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    for (c, &base) in community_start[..k].iter().enumerate() {
        let s = cfg.community_sizes[c];
        let pairs = (s as u64) * (s as u64 - 1) / 2;
        // Unrank increasing triangular indices with a moving row cursor.
        let mut row = 0u64;
        let mut row_start = 0u64;
        bernoulli_hits(pairs, cfg.p_in, &mut rng, |idx| {
            while idx >= row_start + (s as u64 - 1 - row) {
                row_start += s as u64 - 1 - row;
                row += 1;
            }
            let col = row + 1 + (idx - row_start);
            edges.push((base + row as usize, base + col as usize));
        });
    }
    for a in 0..k {
        for b in (a + 1)..k {
            let (sa, sb) = (cfg.community_sizes[a] as u64, cfg.community_sizes[b] as u64);
            let (base_a, base_b) = (community_start[a], community_start[b]);
            bernoulli_hits(sa * sb, cfg.p_out, &mut rng, |idx| {
                let i = (idx / sb) as usize;
                let j = (idx % sb) as usize;
                edges.push((base_a + i, base_b + j));
            });
        }
    }
    let graph = Graph::from_edges(n, &edges, true)?;

    // Features: community mean mu_c = feature_signal / sqrt(2) * e_{c mod F},
    // unit-variance Gaussian noise. Pairwise mean distance equals
    // feature_signal whenever communities map to distinct basis vectors.
    let scale = (cfg.feature_signal / std::f64::consts::SQRT_2) as f32;
    let mut features = Array2::<f32>::zeros((n, cfg.feature_dim));
    for v in 0..n {
        let c = community_of(v);
        for f in 0..cfg.feature_dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = if f == c % cfg.feature_dim { scale } else { 0.0 };
            features[(v, f)] = mean + noise as f32;
        }
    }

    // Labels: community id, flipped to a uniform class with prob label_noise.
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let c = community_of(v);
        let label = if cfg.label_noise > 0.0 && rng.random::<f64>() < cfg.label_noise {
            rng.random_range(0..k)
        } else {
            c
        };
        labels.push(Some(label));
    }

    // Splits: stratified by community.
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for bounds in community_start.windows(2) {
        let mut members: Vec<NodeId> = (bounds[0]..bounds[1]).collect();
        shuffle(&mut members, &mut rng);
        let n_train = ((members.len() as f64) * cfg.train_frac).floor() as usize;
        let n_val = ((members.len() as f64) * cfg.val_frac).floor() as usize;
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    let dataset = Dataset {
        graph,
        features,
        labels,
        num_classes: k,
        train,
        val,
        test,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Fisher-Yates with an explicit rng; identical order across platforms.
pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
