//! Command implementations behind the CLI surface.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use commrand::cache::{batch_access_order, LruSim};
use commrand::community::{louvain, modularity, CommunityAssignment};
use commrand::dataset::Dataset;
use commrand::gnn::{evaluate, save_checkpoint, train, TrainOutcome};
use commrand::metrics::{write_report_csv, EpochReport};
use commrand::minibatch::{Minibatcher, PartitionPolicy};
use commrand::sbm::{gen_sbm, SbmConfig};

use crate::config::{cell_id, config_json_and_hash, RunConfig, SweepConfig};

pub fn cmd_gen_sbm(config_path: &Path, seed: u64, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let cfg: SbmConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", config_path.display()))?;
    let dataset = gen_sbm(&cfg, seed)?;
    dataset.save_bundle(out_dir)?;

    #[derive(serde::Serialize)]
    struct Provenance<'a> {
        sbm: &'a SbmConfig,
        seed: u64,
    }
    let (json, hash) = config_json_and_hash(&Provenance { sbm: &cfg, seed })?;
    std::fs::write(
        out_dir.join("gen-config.json"),
        format!("{{\"config_hash\":\"{hash}\",\"config\":{json}}}\n"),
    )?;
    println!(
        "wrote bundle: {} nodes, {} directed edges, {} classes, train/val/test {}/{}/{}",
        dataset.num_nodes(),
        dataset.graph.num_edges(),
        dataset.num_classes,
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len()
    );
    Ok(())
}

pub fn cmd_detect(
    bundle: &Path,
    resolution: f64,
    seed: u64,
    max_levels: usize,
    out: &Path,
) -> Result<()> {
    let dataset = Dataset::load_bundle(bundle)?;
    let assignment = louvain(&dataset.graph, resolution, seed, max_levels)?;
    assignment.save(out)?;
    let q = modularity(&dataset.graph, &assignment, resolution)
        .map(|q| q.to_string())
        .unwrap_or_else(|_| "undefined".into());
    println!(
        "communities={} modularity={q}",
        assignment.num_communities()
    );
    Ok(())
}

pub fn cmd_reorder(bundle: &Path, assignment_path: &Path, out_dir: &Path) -> Result<()> {
    let dataset = Dataset::load_bundle(bundle)?;
    let assignment = CommunityAssignment::load(assignment_path, dataset.num_nodes())?;
    if !assignment.is_complete() {
        bail!("reorder needs an assignment covering every node");
    }
    let perm = assignment.order_permutation();
    let reordered = dataset.permuted(&perm)?;
    reordered.save_bundle(out_dir)?;

    let mut membership = vec![0usize; dataset.num_nodes()];
    for v in 0..dataset.num_nodes() {
        membership[perm.apply(v)] = assignment.community_of(v).unwrap();
    }
    let remapped = CommunityAssignment::from_membership(membership)?;
    remapped.save(&out_dir.join("assignment.txt"))?;
    println!(
        "reordered bundle written to {} ({} communities as contiguous id ranges)",
        out_dir.display(),
        remapped.num_communities()
    );
    Ok(())
}

pub struct TrainSummary {
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub val_acc: f64,
    pub test_acc: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    bundle: &Path,
    assignment_path: &Path,
    cfg: &RunConfig,
    out_csv: &Path,
    checkpoint: Option<&Path>,
    report_json: Option<&Path>,
    no_timing: bool,
) -> Result<TrainSummary> {
    let dataset = Dataset::load_bundle(bundle)?;
    let assignment = CommunityAssignment::load(assignment_path, dataset.num_nodes())?;
    let resolved = cfg.resolved(dataset.train.len());
    let (json, hash) = config_json_and_hash(&resolved)?;

    let sampler = cfg.sampler(dataset.train.len(), None);
    let model = cfg.model(dataset.feature_dim(), dataset.num_classes);
    let train_cfg = cfg.train_cfg(cfg.seed, None);
    let outcome = train(
        &dataset,
        &assignment,
        cfg.policy,
        &sampler,
        model,
        &train_cfg,
    )?;

    let mut reports = outcome.reports.clone();
    if no_timing {
        for r in reports.iter_mut() {
            r.epoch_wall_time_s = 0.0;
        }
    }
    write_report_csv(
        out_csv,
        &reports,
        &[format!("config_hash={hash}"), format!("config={json}")],
    )?;
    if let Some(path) = report_json {
        let config_value = serde_json::json!({
            "config_hash": hash,
            "resolved": serde_json::from_str::<serde_json::Value>(&json)?,
        });
        commrand::metrics::write_report_json(path, &config_value, &reports)?;
    }
    if let Some(path) = checkpoint {
        save_checkpoint(&outcome.params, path)?;
    }

    let val_acc = best_val_acc(&outcome);
    let test_acc = if dataset.test.is_empty() {
        None
    } else {
        Some(evaluate(&outcome.params, &dataset, &dataset.test)?.1)
    };
    println!(
        "epochs={} best_epoch={} val_acc={} test_acc={}",
        outcome.reports.len(),
        outcome
            .best_epoch
            .map(|e| e.to_string())
            .unwrap_or_else(|| "-".into()),
        val_acc,
        test_acc
            .map(|a| a.to_string())
            .unwrap_or_else(|| "-".into()),
    );
    Ok(TrainSummary {
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.reports.len(),
        val_acc,
        test_acc,
    })
}

fn best_val_acc(outcome: &TrainOutcome) -> f64 {
    match outcome.best_epoch {
        Some(e) => outcome.reports[e].val_acc,
        None => f64::NAN,
    }
}

/// Metrics of one sweep cell, aggregated over its epoch reports.
#[derive(Clone, Copy, Debug)]
struct CellMetrics {
    val_acc: f64,
    best_epoch: usize,
    epochs_run: usize,
    mean_epoch_time_s: f64,
    total_time_s: f64,
    mean_input_nodes: f64,
    mean_feature_bytes: f64,
    mean_labels_per_batch: f64,
}

impl CellMetrics {
    fn from_outcome(outcome: &TrainOutcome, no_timing: bool) -> Result<CellMetrics> {
        if outcome.reports.is_empty() {
            bail!("cell trained for zero epochs");
        }
        let n = outcome.reports.len() as f64;
        let time = |r: &EpochReport| if no_timing { 0.0 } else { r.epoch_wall_time_s };
        let total_time_s: f64 = outcome.reports.iter().map(time).sum();
        let best_epoch = outcome.best_epoch.unwrap_or(outcome.reports.len() - 1);
        Ok(CellMetrics {
            val_acc: outcome.reports[best_epoch].val_acc,
            best_epoch,
            epochs_run: outcome.reports.len(),
            mean_epoch_time_s: total_time_s / n,
            total_time_s,
            mean_input_nodes: outcome
                .reports
                .iter()
                .map(|r| r.mean_input_nodes)
                .sum::<f64>()
                / n,
            mean_feature_bytes: outcome
                .reports
                .iter()
                .map(|r| r.mean_feature_bytes)
                .sum::<f64>()
                / n,
            mean_labels_per_batch: outcome
                .reports
                .iter()
                .map(|r| r.mean_labels_per_batch)
                .sum::<f64>()
                / n,
        })
    }

    fn epochs_to_converge(&self) -> f64 {
        (self.best_epoch + 1) as f64
    }
}

pub const SWEEP_HEADER: &str = "policy,mix_fraction,intra_prob,seed,status,val_acc,best_epoch,epochs_run,mean_epoch_time_s,total_time_s,mean_input_nodes,mean_feature_bytes,mean_labels_per_batch,norm_epoch_time,norm_epochs,norm_total_time,cell_id";

struct SweepRow {
    policy: PartitionPolicy,
    p: f64,
    seed: u64,
    result: std::result::Result<CellMetrics, String>,
    cell: String,
}

impl SweepRow {
    fn to_csv(&self, baseline: Option<&CellMetrics>) -> String {
        let mix = self
            .policy
            .mix_fraction()
            .map(|m| m.to_string())
            .unwrap_or_default();
        match &self.result {
            Ok(m) => {
                let norm = |x: f64, base: Option<f64>| -> String {
                    match base {
                        Some(b) => (x / b).to_string(),
                        None => String::new(),
                    }
                };
                format!(
                    "{},{},{},{},ok,{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.policy.name(),
                    mix,
                    self.p,
                    self.seed,
                    m.val_acc,
                    m.best_epoch,
                    m.epochs_run,
                    m.mean_epoch_time_s,
                    m.total_time_s,
                    m.mean_input_nodes,
                    m.mean_feature_bytes,
                    m.mean_labels_per_batch,
                    norm(m.mean_epoch_time_s, baseline.map(|b| b.mean_epoch_time_s)),
                    norm(
                        m.epochs_to_converge(),
                        baseline.map(|b| b.epochs_to_converge())
                    ),
                    norm(m.total_time_s, baseline.map(|b| b.total_time_s)),
                    self.cell
                )
            }
            Err(msg) => format!(
                "{},{},{},{},error:{},,,,,,,,,,,,{}",
                self.policy.name(),
                mix,
                self.p,
                self.seed,
                msg.replace([',', '\n'], ";"),
                self.cell
            ),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    dataset: &Dataset,
    assignment: &CommunityAssignment,
    cfg: &SweepConfig,
    policy: PartitionPolicy,
    p: f64,
    seed: u64,
    fixed_epochs: Option<usize>,
    no_timing: bool,
) -> Result<CellMetrics> {
    let sampler = cfg
        .base
        .sampler(dataset.train.len(), Some((policy, p, seed)));
    let model = cfg.base.model(dataset.feature_dim(), dataset.num_classes);
    let train_cfg = cfg.base.train_cfg(seed, fixed_epochs);
    let outcome = train(dataset, assignment, policy, &sampler, model, &train_cfg)?;
    CellMetrics::from_outcome(&outcome, no_timing)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    bundle: &Path,
    assignment_path: &Path,
    cfg: &SweepConfig,
    out_csv: &Path,
    workers: Option<usize>,
    fixed_epochs: Option<usize>,
    no_timing: bool,
) -> Result<()> {
    let dataset = Dataset::load_bundle(bundle)?;
    let assignment = CommunityAssignment::load(assignment_path, dataset.num_nodes())?;
    let resolved_base = cfg.base.resolved(dataset.train.len());
    let resolved = SweepConfig {
        base: resolved_base,
        policies: cfg.policies.clone(),
        p_grid: cfg.p_grid.clone(),
        seeds: cfg.seeds.clone(),
        capacities: cfg.capacities.clone(),
    };
    let (json, hash) = config_json_and_hash(&resolved)?;

    // resume: collect cell ids (and baseline metrics) already on disk
    let mut existing: HashSet<String> = HashSet::new();
    let mut baseline_from_disk: HashMap<u64, CellMetrics> = HashMap::new();
    let resume = out_csv.exists();
    if resume {
        let text = std::fs::read_to_string(out_csv)?;
        verify_existing_hash(&text, &hash)?;
        for line in text.lines() {
            if line.starts_with('#') || line.starts_with("policy,") || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if let Some(cell) = fields.last() {
                existing.insert((*cell).to_string());
            }
            if fields.len() >= 13
                && fields[0] == "rand-roots"
                && fields[2] == "0.5"
                && fields[4] == "ok"
            {
                if let (Ok(seed), Ok(metrics)) = (fields[3].parse::<u64>(), parse_metrics(&fields))
                {
                    baseline_from_disk.insert(seed, metrics);
                }
            }
        }
    }

    let cells: Vec<(PartitionPolicy, f64, u64)> = cfg
        .policies
        .iter()
        .flat_map(|&policy| {
            cfg.p_grid
                .iter()
                .flat_map(move |&p| cfg.seeds.iter().map(move |&seed| (policy, p, seed)))
        })
        .collect();
    let todo: Vec<&(PartitionPolicy, f64, u64)> = cells
        .iter()
        .filter(|(policy, p, seed)| !existing.contains(&cell_id(&hash, policy, *p, *seed)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(1))
        .build()?;
    let results: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        todo.par_iter()
            .map(|&&(policy, p, seed)| {
                let result = run_cell(
                    &dataset,
                    &assignment,
                    cfg,
                    policy,
                    p,
                    seed,
                    fixed_epochs,
                    no_timing,
                )
                .map_err(|e| e.to_string());
                SweepRow {
                    policy,
                    p,
                    seed,
                    result,
                    cell: cell_id(&hash, &policy, p, seed),
                }
            })
            .collect()
    });

    // baseline metrics per seed for normalization; run extra (unemitted)
    // baseline cells when the grid does not contain them
    let mut baselines: HashMap<u64, CellMetrics> = baseline_from_disk;
    for row in &results {
        if row.policy == PartitionPolicy::RandRoots && row.p == 0.5 {
            if let Ok(m) = &row.result {
                baselines.insert(row.seed, *m);
            }
        }
    }
    let missing: Vec<u64> = cfg
        .seeds
        .iter()
        .copied()
        .filter(|s| !baselines.contains_key(s))
        .collect();
    let extra: Vec<(u64, Result<CellMetrics>)> = pool.install(|| {
        use rayon::prelude::*;
        missing
            .par_iter()
            .map(|&seed| {
                (
                    seed,
                    run_cell(
                        &dataset,
                        &assignment,
                        cfg,
                        PartitionPolicy::RandRoots,
                        0.5,
                        seed,
                        fixed_epochs,
                        no_timing,
                    ),
                )
            })
            .collect()
    });
    for (seed, result) in extra {
        if let Ok(m) = result {
            baselines.insert(seed, m);
        }
    }

    let mut out = std::io::BufWriter::new(if resume {
        std::fs::OpenOptions::new().append(true).open(out_csv)?
    } else {
        std::fs::File::create(out_csv)?
    });
    if !resume {
        writeln!(out, "# config_hash={hash}")?;
        writeln!(out, "# config={json}")?;
        writeln!(out, "{SWEEP_HEADER}")?;
    }
    for row in &results {
        writeln!(out, "{}", row.to_csv(baselines.get(&row.seed)))?;
    }
    out.flush()?;
    println!(
        "sweep: {} cells written ({} skipped as already present) -> {}",
        results.len(),
        cells.len() - results.len(),
        out_csv.display()
    );
    Ok(())
}

fn verify_existing_hash(text: &str, hash: &str) -> Result<()> {
    for line in text.lines() {
        if let Some(existing) = line.strip_prefix("# config_hash=") {
            if existing.trim() != hash {
                bail!(
                    "existing output was produced with config hash {existing}, current is {hash}; \
                     refusing to mix configurations"
                );
            }
            return Ok(());
        }
    }
    bail!("existing output file lacks a config_hash header");
}

fn parse_metrics(fields: &[&str]) -> std::result::Result<CellMetrics, std::num::ParseFloatError> {
    Ok(CellMetrics {
        val_acc: fields[5].parse()?,
        best_epoch: fields[6].parse().unwrap_or(0),
        epochs_run: fields[7].parse().unwrap_or(0),
        mean_epoch_time_s: fields[8].parse()?,
        total_time_s: fields[9].parse()?,
        mean_input_nodes: fields[10].parse()?,
        mean_feature_bytes: fields[11].parse()?,
        mean_labels_per_batch: fields[12].parse()?,
    })
}

pub const CACHESIM_HEADER: &str =
    "policy,mix_fraction,intra_prob,seed,capacity,epochs,accesses,misses,miss_rate";

pub fn cmd_cachesim(
    bundle: &Path,
    assignment_path: &Path,
    cfg: &SweepConfig,
    capacities: &[usize],
    epochs: usize,
    out_csv: &Path,
) -> Result<()> {
    if capacities.is_empty() {
        bail!("cachesim needs at least one --capacity (or capacities in the config)");
    }
    if epochs == 0 {
        bail!("cachesim needs at least one epoch");
    }
    let dataset = Dataset::load_bundle(bundle)?;
    let assignment = CommunityAssignment::load(assignment_path, dataset.num_nodes())?;
    let resolved = cfg.base.resolved(dataset.train.len());
    let (json, hash) =
        config_json_and_hash(&(&resolved, &cfg.p_grid, &cfg.seeds, capacities, epochs))?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(out_csv)?);
    writeln!(out, "# config_hash={hash}")?;
    writeln!(out, "# config={json}")?;
    writeln!(out, "{CACHESIM_HEADER}")?;
    for &policy in &cfg.policies {
        for &p in &cfg.p_grid {
            for &seed in &cfg.seeds {
                let sampler = cfg
                    .base
                    .sampler(dataset.train.len(), Some((policy, p, seed)));
                let batcher =
                    Minibatcher::new(&dataset.graph, &assignment, &dataset.train, policy, sampler)?;
                for &capacity in capacities {
                    let mut sim = LruSim::new(capacity)?;
                    for epoch in 0..epochs {
                        for sub in batcher.epoch(epoch)? {
                            for id in batch_access_order(&sub) {
                                sim.access(id);
                            }
                        }
                    }
                    let stats = sim.stats();
                    let mix = policy
                        .mix_fraction()
                        .map(|m| m.to_string())
                        .unwrap_or_default();
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        policy.name(),
                        mix,
                        p,
                        seed,
                        capacity,
                        epochs,
                        stats.accesses,
                        stats.misses,
                        stats.miss_rate()
                    )?;
                }
            }
        }
    }
    out.flush()?;
    println!("cachesim results -> {}", out_csv.display());
    Ok(())
}

/// Exit code classification: invalid inputs and configs exit 2, runtime
/// failures exit 1.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<commrand::Error>() {
        return match e {
            commrand::Error::Invalid(_)
            | commrand::Error::Parse { .. }
            | commrand::Error::Shape(_)
            | commrand::Error::Serde(_) => 2,
            commrand::Error::Io(_) => 1,
        };
    }
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    1
}

pub fn map_lib_err(e: commrand::Error) -> anyhow::Error {
    anyhow!(e)
}
