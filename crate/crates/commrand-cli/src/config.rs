//! JSON experiment configs: file values, flag overrides, and the resolved
//! config hash embedded in every output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use commrand::gnn::{Arch, ModelConfig, TrainConfig};
use commrand::minibatch::{PartitionPolicy, SamplerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn default_arch() -> Arch {
    Arch::SageMean
}

fn default_fanouts() -> Vec<usize> {
    vec![10, 10]
}

fn default_hidden() -> usize {
    64
}

fn default_policy() -> PartitionPolicy {
    PartitionPolicy::RandRoots
}

fn default_intra() -> f64 {
    0.5
}

fn default_lr() -> f64 {
    1e-3
}

fn default_wd() -> f64 {
    5e-4
}

fn default_epochs() -> usize {
    100
}

fn default_es_patience() -> usize {
    6
}

fn default_lr_patience() -> usize {
    3
}

fn default_lr_factor() -> f64 {
    0.1
}

/// One training run. Missing fields take the documented defaults;
/// `batch_size` defaults to min(1024, |train| / 8) at run time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_arch")]
    pub arch: Arch,
    #[serde(default = "default_fanouts")]
    pub fanouts: Vec<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_policy")]
    pub policy: PartitionPolicy,
    #[serde(default = "default_intra")]
    pub intra_prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_es_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "default_lr_patience")]
    pub lr_plateau_patience: usize,
    #[serde(default = "default_lr_factor")]
    pub lr_plateau_factor: f64,
    #[serde(default)]
    pub cache_capacity: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

/// Flag-level overrides; `Some` wins over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub mix_fraction: Option<f64>,
    pub intra_prob: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub cache_capacity: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: RunConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                Ok(cfg)
            }
            None => Ok(RunConfig::default()),
        }
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(policy) = &o.policy {
            self.policy = parse_policy(policy, o.mix_fraction.or(self.policy.mix_fraction()))?;
        } else if let Some(mix) = o.mix_fraction {
            match self.policy {
                PartitionPolicy::CommRandMix { .. } => {
                    self.policy = PartitionPolicy::CommRandMix { mix_fraction: mix };
                }
                _ => bail!("--mix-fraction requires --policy comm-rand-mix"),
            }
        }
        if let Some(p) = o.intra_prob {
            self.intra_prob = p;
        }
        if let Some(epochs) = o.max_epochs {
            self.max_epochs = epochs;
        }
        if let Some(b) = o.batch_size {
            self.batch_size = Some(b);
        }
        if let Some(c) = o.cache_capacity {
            self.cache_capacity = Some(c);
        }
        Ok(())
    }

    pub fn resolved_batch_size(&self, train_len: usize) -> usize {
        self.batch_size
            .unwrap_or_else(|| 1024.min((train_len / 8).max(1)))
    }

    /// Copy with every derived value filled in; this is what gets hashed and
    /// echoed into outputs.
    pub fn resolved(&self, train_len: usize) -> RunConfig {
        let mut cfg = self.clone();
        cfg.batch_size = Some(self.resolved_batch_size(train_len));
        cfg
    }

    pub fn sampler(
        &self,
        train_len: usize,
        policy_p: Option<(PartitionPolicy, f64, u64)>,
    ) -> SamplerConfig {
        let (p, seed) = match policy_p {
            Some((_, p, seed)) => (p, seed),
            None => (self.intra_prob, self.seed),
        };
        SamplerConfig {
            fanouts: self.fanouts.clone(),
            intra_prob: p,
            batch_size: self.resolved_batch_size(train_len),
            seed,
        }
    }

    pub fn model(&self, in_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            arch: self.arch,
            num_layers: self.fanouts.len(),
            in_dim,
            hidden_dim: self.hidden_dim,
            num_classes,
        }
    }

    pub fn train_cfg(&self, seed: u64, fixed_epochs: Option<usize>) -> TrainConfig {
        let (max_epochs, early_stop) = match fixed_epochs {
            Some(n) => (n, n + 1),
            None => (self.max_epochs, self.early_stop_patience),
        };
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            max_epochs,
            early_stop_patience: early_stop,
            lr_plateau_patience: self.lr_plateau_patience,
            lr_plateau_factor: self.lr_plateau_factor,
            param_seed: seed,
            cache_capacity: self.cache_capacity,
        }
    }
}

pub fn parse_policy(name: &str, mix_fraction: Option<f64>) -> Result<PartitionPolicy> {
    match name {
        "rand-roots" => Ok(PartitionPolicy::RandRoots),
        "norand-roots" => Ok(PartitionPolicy::NorandRoots),
        "comm-rand-mix" => Ok(PartitionPolicy::CommRandMix {
            mix_fraction: mix_fraction.unwrap_or(0.0),
        }),
        other => {
            bail!("unknown policy {other:?} (expected rand-roots, norand-roots, comm-rand-mix)")
        }
    }
}

/// Grid sweep over (policy, intra-community probability, seed).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub base: RunConfig,
    pub policies: Vec<PartitionPolicy>,
    pub p_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Cache capacities in node slots; used by the cachesim command.
    #[serde(default)]
    pub capacities: Vec<usize>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<SweepConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: SweepConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() || self.p_grid.is_empty() || self.seeds.is_empty() {
            bail!("sweep grids (policies, p_grid, seeds) must be non-empty");
        }
        for &p in &self.p_grid {
            if !(0.5..=1.0).contains(&p) {
                bail!("intra-community probability {p} outside [0.5, 1.0]");
            }
        }
        for policy in &self.policies {
            policy
                .validate()
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        }
        Ok(())
    }
}

/// Canonical JSON plus its sha256 hex digest.
pub fn config_json_and_hash<T: Serialize>(value: &T) -> Result<(String, String)> {
    let json = serde_json::to_string(value)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok((json, hex_encode(&digest)))
}

/// Stable cell id: short hash over the resolved config hash and the cell
/// coordinates.
pub fn cell_id(config_hash: &str, policy: &PartitionPolicy, p: f64, seed: u64) -> String {
    let key = format!(
        "{config_hash}|{}|{:?}|{p}|{seed}",
        policy.name(),
        policy.mix_fraction()
    );
    let digest = Sha256::digest(key.as_bytes());
    hex_encode(&digest[..6])
}

fn hex_encode(bytes: &[u8]) -> String {
    let mut hex = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}
