//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (visible with `cargo test -- --nocapture`).
//!
//! Statistical orderings use paired sign tests over 20 seeds at alpha=0.05:
//! a claimed non-increasing chain fails if any adjacent step shows a
//! significant increase, and its endpoints must show a significant decrease.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use commrand::community::{louvain, louvain_trace, modularity, CommunityAssignment};
use commrand::dataset::Dataset;
use commrand::gnn::{
    forward, loss_and_backward, normalize_adjacency, softmax_cross_entropy, Arch, BlockAdjacency,
    ModelConfig, ModelParams, TrainConfig,
};
use commrand::graph::{Graph, NodeId};
use commrand::metrics::labels_per_batch;
use commrand::minibatch::{
    build_subgraph, sample_layer, BatchSubgraph, Minibatcher, PartitionPolicy, SamplerConfig,
};
use commrand::sbm::{gen_sbm, SbmConfig};
use commrand::stats::{chi_square_stat, sign_test_greater};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 0.05;
const NUM_SEEDS: usize = 20;

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

/// 3,200-node, 16-community SBM instances, one per seed, with detected
/// communities. Shared by the statistical criteria.
fn sbm_instances() -> &'static Vec<(Dataset, CommunityAssignment)> {
    static INSTANCES: OnceLock<Vec<(Dataset, CommunityAssignment)>> = OnceLock::new();
    INSTANCES.get_or_init(|| {
        let cfg = SbmConfig {
            community_sizes: vec![200; 16],
            p_in: 0.05,
            p_out: 0.001,
            feature_dim: 8,
            feature_signal: 1.0,
            label_noise: 0.0,
            train_frac: 0.6,
            val_frac: 0.2,
        };
        (0..NUM_SEEDS as u64)
            .map(|seed| {
                let d = gen_sbm(&cfg, seed).expect("sbm");
                let a = louvain(&d.graph, 1.0, seed, 20).expect("louvain");
                (d, a)
            })
            .collect()
    })
}

fn sampler(p: f64, seed: u64) -> SamplerConfig {
    SamplerConfig {
        fanouts: vec![10, 10],
        intra_prob: p,
        batch_size: 120,
        seed,
    }
}

fn mean_footprint(
    d: &Dataset,
    a: &CommunityAssignment,
    policy: PartitionPolicy,
    p: f64,
    seed: u64,
) -> f64 {
    let mb = Minibatcher::new(&d.graph, a, &d.train, policy, sampler(p, seed)).expect("batcher");
    let mut total = 0usize;
    let mut batches = 0usize;
    for sub in mb.epoch(0).expect("epoch") {
        total += sub.input_nodes().len();
        batches += 1;
    }
    total as f64 / batches as f64
}

/// Per-config values across seeds; `chain[i]` must be >= `chain[i+1]`.
fn assert_non_increasing_chain(label: &str, chain: &[(String, Vec<f64>)]) {
    for w in chain.windows(2) {
        let (ref name_a, ref a) = w[0];
        let (ref name_b, ref b) = w[1];
        let pairs: Vec<(f64, f64)> = b.iter().copied().zip(a.iter().copied()).collect();
        let increase = sign_test_greater(&pairs);
        assert!(
            increase.p_value >= ALPHA,
            "{label}: significant increase from {name_a} to {name_b} \
             (wins {} losses {} p {})",
            increase.wins,
            increase.losses,
            increase.p_value
        );
    }
    let (ref first_name, ref first) = chain[0];
    let (ref last_name, ref last) = chain[chain.len() - 1];
    let pairs: Vec<(f64, f64)> = first.iter().copied().zip(last.iter().copied()).collect();
    let decrease = sign_test_greater(&pairs);
    assert!(
        decrease.p_value < ALPHA,
        "{label}: no significant decrease from {first_name} to {last_name} \
         (wins {} losses {} p {})",
        decrease.wins,
        decrease.losses,
        decrease.p_value
    );
}

fn mix(fraction: f64) -> PartitionPolicy {
    PartitionPolicy::CommRandMix {
        mix_fraction: fraction,
    }
}

// ---------------------------------------------------------------------------
// criterion 1
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_sampling_law_fidelity() {
    // node 0: neighbor 1 intra, neighbor 2 inter; p=0.9, fanout 1
    let g = Graph::from_edges(0, &[(0, 1), (0, 2)], true).unwrap();
    let a = CommunityAssignment::from_membership(vec![0, 0, 1]).unwrap();
    let draws = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut intra_hits = 0usize;
    for _ in 0..draws {
        let edges = sample_layer(&g, &a, &[0], 1, 0.9, &mut rng);
        let picked: Vec<NodeId> = edges.iter().map(|&(s, _)| s).filter(|&s| s != 0).collect();
        assert_eq!(picked.len(), 1);
        if picked[0] == 1 {
            intra_hits += 1;
        }
    }
    let freq = intra_hits as f64 / draws as f64;
    let sigma = (0.9 * 0.1 / draws as f64).sqrt();
    assert!(
        (freq - 0.9).abs() <= 3.0 * sigma,
        "intra frequency {freq} outside 0.9 +- {}",
        3.0 * sigma
    );
    println!(
        "acceptance 01 sampling-law-fidelity: PASS (freq={freq:.5}, 3sigma={:.5})",
        3.0 * sigma
    );
}

// ---------------------------------------------------------------------------
// criterion 2
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_knob_limits() {
    // p = 0.5: uniform selection over a node with 8 neighbors.
    // chi-square with df = 7; critical value at alpha = 0.01 is 18.4753.
    let edges: Vec<(usize, usize)> = (1..=8).map(|v| (0, v)).collect();
    let g = Graph::from_edges(0, &edges, true).unwrap();
    let membership: Vec<usize> = std::iter::once(0)
        .chain((1..=8).map(|v| usize::from(v > 4)))
        .collect();
    let a = CommunityAssignment::from_membership(membership).unwrap();
    let draws = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0u64; 8];
    for _ in 0..draws {
        let edges = sample_layer(&g, &a, &[0], 1, 0.5, &mut rng);
        for &(s, _) in &edges {
            if s != 0 {
                counts[s - 1] += 1;
            }
        }
    }
    let expected = vec![draws as f64 / 8.0; 8];
    let stat = chi_square_stat(&counts, &expected);
    assert!(
        stat < 18.4753,
        "chi-square {stat} exceeds the 0.01 critical value"
    );

    // p = 1.0: an entire epoch emits no inter-community edge.
    let (d, a) = &sbm_instances()[0];
    for policy in [PartitionPolicy::RandRoots, mix(0.0)] {
        let mb = Minibatcher::new(&d.graph, a, &d.train, policy, sampler(1.0, 3)).unwrap();
        let mut checked = 0usize;
        for sub in mb.epoch(0).unwrap() {
            for block in &sub.blocks {
                for &(s, t) in &block.edges {
                    let (u, v) = (block.src_nodes[s], block.dst_nodes[t]);
                    if u != v {
                        assert_eq!(
                            a.community_of(u),
                            a.community_of(v),
                            "inter-community edge ({u},{v}) at p=1.0"
                        );
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000, "too few edges checked ({checked})");
    }
    println!("acceptance 02 knob-limits: PASS (chi2={stat:.2} < 18.48; zero inter edges at p=1.0)");
}

// ---------------------------------------------------------------------------
// criterion 3
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_footprint_monotonicity() {
    let instances = sbm_instances();
    let policies: Vec<(String, PartitionPolicy)> = vec![
        ("rand-roots".into(), PartitionPolicy::RandRoots),
        ("mix(0.5)".into(), mix(0.5)),
        ("mix(0.25)".into(), mix(0.25)),
        ("mix(0.125)".into(), mix(0.125)),
        ("mix(0)".into(), mix(0.0)),
        ("norand-roots".into(), PartitionPolicy::NorandRoots),
    ];
    let p_grid = [0.5, 0.9, 1.0];

    // footprints[policy][p] = values over seeds
    let footprints: Vec<Vec<Vec<f64>>> = policies
        .iter()
        .map(|(_, policy)| {
            p_grid
                .iter()
                .map(|&p| {
                    instances
                        .iter()
                        .enumerate()
                        .map(|(s, (d, a))| mean_footprint(d, a, *policy, p, s as u64))
                        .collect()
                })
                .collect()
        })
        .collect();

    // non-increasing in p for every fixed policy
    for (pi, (name, _)) in policies.iter().enumerate() {
        let chain: Vec<(String, Vec<f64>)> = p_grid
            .iter()
            .enumerate()
            .map(|(xi, p)| (format!("{name} p={p}"), footprints[pi][xi].clone()))
            .collect();
        assert_non_increasing_chain(&format!("footprint vs p for {name}"), &chain);
    }
    // non-increasing along the policy chain for every fixed p
    for (xi, p) in p_grid.iter().enumerate() {
        let chain: Vec<(String, Vec<f64>)> = policies
            .iter()
            .enumerate()
            .map(|(pi, (name, _))| (format!("{name} p={p}"), footprints[pi][xi].clone()))
            .collect();
        assert_non_increasing_chain(&format!("footprint vs policy at p={p}"), &chain);
    }
    let base = mean(&footprints[0][0]);
    let tight = mean(&footprints[5][2]);
    println!(
        "acceptance 03 footprint-monotonicity: PASS (rand p=0.5 {base:.0} -> norand p=1.0 {tight:.0} mean input nodes)"
    );
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------------------
// criterion 4
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_label_diversity_ordering() {
    let instances = sbm_instances();
    let policies: Vec<(String, PartitionPolicy)> = vec![
        ("rand-roots".into(), PartitionPolicy::RandRoots),
        ("mix(0)".into(), mix(0.0)),
        ("norand-roots".into(), PartitionPolicy::NorandRoots),
    ];
    let chain: Vec<(String, Vec<f64>)> = policies
        .iter()
        .map(|(name, policy)| {
            let values: Vec<f64> = instances
                .iter()
                .enumerate()
                .map(|(s, (d, a))| {
                    let mb =
                        Minibatcher::new(&d.graph, a, &d.train, *policy, sampler(0.5, s as u64))
                            .unwrap();
                    let plan = mb.plan(0).unwrap();
                    let total: usize = plan
                        .batches
                        .iter()
                        .map(|b| labels_per_batch(b, &d.labels).unwrap())
                        .sum();
                    total as f64 / plan.batches.len() as f64
                })
                .collect();
            ((*name).clone(), values)
        })
        .collect();
    assert_non_increasing_chain("labels per batch", &chain);
    println!(
        "acceptance 04 label-diversity-ordering: PASS (rand {:.1} >= mix(0) {:.1} >= norand {:.1})",
        mean(&chain[0].1),
        mean(&chain[1].1),
        mean(&chain[2].1)
    );
}

// ---------------------------------------------------------------------------
// criterion 5
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_cache_locality_ordering() {
    use commrand::cache::{batch_access_order, LruSim};
    let instances = sbm_instances();
    let num_nodes = instances[0].0.num_nodes();
    let capacities = [num_nodes / 2, num_nodes / 4, num_nodes / 8];
    let policies: Vec<(String, PartitionPolicy)> = vec![
        ("rand-roots".into(), PartitionPolicy::RandRoots),
        ("mix(0.5)".into(), mix(0.5)),
        ("mix(0.25)".into(), mix(0.25)),
        ("mix(0.125)".into(), mix(0.125)),
        ("mix(0)".into(), mix(0.0)),
    ];
    // Batch footprints must sit well below the smallest capacity, so the
    // cache holds several recent batches and reuse across batches is what
    // distinguishes the policies.
    let cache_sampler = |seed: u64| SamplerConfig {
        fanouts: vec![3, 3],
        intra_prob: 1.0,
        batch_size: 20,
        seed,
    };

    // miss[policy][capacity] over seeds, at p = 1.0, 2 epochs per stream
    let mut miss = vec![vec![Vec::new(); capacities.len()]; policies.len()];
    for (s, (d, a)) in instances.iter().enumerate() {
        for (pi, (_, policy)) in policies.iter().enumerate() {
            let mb =
                Minibatcher::new(&d.graph, a, &d.train, *policy, cache_sampler(s as u64)).unwrap();
            let mut stream: Vec<usize> = Vec::new();
            for epoch in 0..2 {
                for sub in mb.epoch(epoch).unwrap() {
                    stream.extend(batch_access_order(&sub));
                }
            }
            for (ci, &capacity) in capacities.iter().enumerate() {
                let mut sim = LruSim::new(capacity).unwrap();
                for &id in &stream {
                    sim.access(id);
                }
                miss[pi][ci].push(sim.stats().miss_rate());
            }
        }
    }

    // at capacity 25%: uniform strictly above every community-biased policy
    for pi in 1..policies.len() {
        let pairs: Vec<(f64, f64)> = miss[0][1]
            .iter()
            .copied()
            .zip(miss[pi][1].iter().copied())
            .collect();
        let t = sign_test_greater(&pairs);
        assert!(
            t.p_value < ALPHA,
            "rand-roots not significantly above {} at 25% capacity (wins {} p {})",
            policies[pi].0,
            t.wins,
            t.p_value
        );
    }

    // widening gap (uniform minus most-biased) as capacity shrinks
    let gap_at = |ci: usize| -> Vec<f64> {
        miss[0][ci]
            .iter()
            .zip(miss[4][ci].iter())
            .map(|(u, b)| u - b)
            .collect()
    };
    let gaps: Vec<(String, Vec<f64>)> = (0..capacities.len())
        .map(|ci| (format!("capacity {}", capacities[ci]), gap_at(ci)))
        .collect();
    // gap grows as capacity shrinks: the reversed chain is non-increasing
    let reversed: Vec<(String, Vec<f64>)> = gaps.iter().rev().cloned().collect();
    assert_non_increasing_chain("uniform-vs-biased gap vs capacity", &reversed);

    println!(
        "acceptance 05 cache-locality-ordering: PASS (25% cap: rand {:.3} > mix(0) {:.3}; gap 50% {:.3} -> 12.5% {:.3})",
        mean(&miss[0][1]),
        mean(&miss[4][1]),
        mean(&gaps[0].1),
        mean(&gaps[2].1)
    );
}

// ---------------------------------------------------------------------------
// criterion 6
// ---------------------------------------------------------------------------

fn random_subgraph(seed: u64, num_layers: usize) -> BatchSubgraph {
    let cfg = SbmConfig {
        community_sizes: vec![6, 5],
        p_in: 0.6,
        p_out: 0.2,
        feature_dim: 3,
        feature_signal: 1.0,
        label_noise: 0.0,
        train_frac: 0.5,
        val_frac: 0.25,
    };
    let d = gen_sbm(&cfg, seed).unwrap();
    let membership: Vec<usize> = (0..11).map(|v| usize::from(v >= 6)).collect();
    let a = CommunityAssignment::from_membership(membership).unwrap();
    let sampler = SamplerConfig {
        fanouts: vec![3; num_layers],
        intra_prob: 0.9,
        batch_size: 4,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
    build_subgraph(&d.graph, &a, &[0, 3, 7], &sampler, &mut rng)
}

#[test]
fn acceptance_06_gradient_correctness() {
    let mut worst = 0.0f64;
    for arch in [Arch::Gcn, Arch::SageMean] {
        for num_layers in [1usize, 2, 3] {
            for instance in 0..5u64 {
                let seed = instance * 31 + num_layers as u64;
                let sub = random_subgraph(seed, num_layers);
                let cfg = ModelConfig {
                    arch,
                    num_layers,
                    in_dim: 3,
                    hidden_dim: 4,
                    num_classes: 3,
                };
                let mut params = ModelParams::<f64>::xavier(cfg, seed).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9);
                for layer in params.layers.iter_mut() {
                    layer.bias =
                        Array1::from_shape_fn(layer.bias.len(), |_| rng.random::<f64>() * 0.1);
                }
                let adjs: Vec<BlockAdjacency<f64>> = sub
                    .blocks
                    .iter()
                    .map(|b| normalize_adjacency(b, arch))
                    .collect();
                let x = Array2::from_shape_fn((sub.input_nodes().len(), 3), |_| {
                    rng.random::<f64>() - 0.5
                });
                let labels: Vec<usize> = sub.roots.iter().map(|&v| v % 3).collect();
                let rel = max_fd_error(&mut params, &adjs, &x, &labels);
                worst = worst.max(rel);
                assert!(
                    rel < 1e-4,
                    "{arch:?} L={num_layers} instance {instance}: rel err {rel}"
                );
            }
        }
    }
    println!("acceptance 06 gradient-correctness: PASS (worst rel err {worst:.2e})");
}

fn loss_of(
    params: &ModelParams<f64>,
    adjs: &[BlockAdjacency<f64>],
    x: &Array2<f64>,
    labels: &[usize],
) -> f64 {
    let (logits, _) = forward(params, adjs, x).unwrap();
    softmax_cross_entropy(&logits, labels).unwrap().0
}

/// Central finite differences over every parameter coordinate; h = 1e-5.
fn max_fd_error(
    params: &mut ModelParams<f64>,
    adjs: &[BlockAdjacency<f64>],
    x: &Array2<f64>,
    labels: &[usize],
) -> f64 {
    let (_, acts) = forward(params, adjs, x).unwrap();
    let (_, grads) = loss_and_backward(params, adjs, &acts, labels).unwrap();
    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let num_layers = params.cfg.num_layers;
    for l in 0..num_layers {
        for t in 0..3usize {
            let coords: Vec<(usize, usize)> = match t {
                0 => {
                    let w = &params.layers[l].w_neigh;
                    (0..w.nrows())
                        .flat_map(|r| (0..w.ncols()).map(move |c| (r, c)))
                        .collect()
                }
                1 => match &params.layers[l].w_self {
                    Some(w) => (0..w.nrows())
                        .flat_map(|r| (0..w.ncols()).map(move |c| (r, c)))
                        .collect(),
                    None => Vec::new(),
                },
                _ => (0..params.layers[l].bias.len()).map(|c| (0, c)).collect(),
            };
            for (r, c) in coords {
                let read = |p: &ModelParams<f64>| match t {
                    0 => p.layers[l].w_neigh[(r, c)],
                    1 => p.layers[l].w_self.as_ref().unwrap()[(r, c)],
                    _ => p.layers[l].bias[c],
                };
                let write = |p: &mut ModelParams<f64>, v: f64| match t {
                    0 => p.layers[l].w_neigh[(r, c)] = v,
                    1 => p.layers[l].w_self.as_mut().unwrap()[(r, c)] = v,
                    _ => p.layers[l].bias[c] = v,
                };
                let orig = read(params);
                write(params, orig + h);
                let up = loss_of(params, adjs, x, labels);
                write(params, orig - h);
                let down = loss_of(params, adjs, x, labels);
                write(params, orig);
                let fd = (up - down) / (2.0 * h);
                let analytic = match t {
                    0 => grads.layers[l].w_neigh[(r, c)],
                    1 => grads.layers[l].w_self.as_ref().unwrap()[(r, c)],
                    _ => grads.layers[l].bias[c],
                };
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
    }
    max_rel
}

// ---------------------------------------------------------------------------
// criterion 7
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_forward_oracle_equivalence() {
    let mut worst = 0.0f64;
    for (arch, seed) in [
        (Arch::Gcn, 11u64),
        (Arch::Gcn, 12),
        (Arch::SageMean, 13),
        (Arch::SageMean, 14),
    ] {
        let sub = random_subgraph(seed, 2);
        assert!(sub.input_nodes().len() <= 20, "oracle instance too large");
        let cfg = ModelConfig {
            arch,
            num_layers: 2,
            in_dim: 3,
            hidden_dim: 5,
            num_classes: 4,
        };
        let params = ModelParams::<f64>::xavier(cfg, seed).unwrap();
        let adjs: Vec<BlockAdjacency<f64>> = sub
            .blocks
            .iter()
            .map(|b| normalize_adjacency(b, arch))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((sub.input_nodes().len(), 3), |_| rng.random::<f64>() - 0.5);
        let (logits, _) = forward(&params, &adjs, &x).unwrap();

        // dense oracle: sigma(A' X W) with the block's dense A'
        let mut h = x.clone();
        for (l, layer) in params.layers.iter().enumerate() {
            let mut dense = Array2::<f64>::zeros((adjs[l].num_dst, adjs[l].num_src));
            for (&(s, dd), &w) in adjs[l].edges.iter().zip(&adjs[l].weights) {
                dense[(dd, s)] += w;
            }
            let mut z = dense.dot(&h).dot(&layer.w_neigh);
            if let Some(w_self) = &layer.w_self {
                z = z + h.slice(ndarray::s![..adjs[l].num_dst, ..]).dot(w_self);
            }
            z += &layer.bias;
            h = if l + 1 < params.cfg.num_layers {
                z.mapv(|v| v.max(0.0))
            } else {
                z
            };
        }
        let err = (&logits - &h).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        worst = worst.max(err);
        assert!(err < 1e-10, "{arch:?}: max abs err {err}");
    }
    println!("acceptance 07 forward-oracle-equivalence: PASS (worst abs err {worst:.2e})");
}

// ---------------------------------------------------------------------------
// criterion 8
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_end_to_end_accuracy_parity() {
    let cfg = SbmConfig {
        community_sizes: vec![100; 4],
        p_in: 0.1,
        p_out: 0.005,
        feature_dim: 16,
        feature_signal: 2.0,
        label_noise: 0.0,
        train_frac: 0.6,
        val_frac: 0.2,
    };
    let d = gen_sbm(&cfg, 7).unwrap();
    let a = louvain(&d.graph, 1.0, 7, 20).unwrap();
    let model = ModelConfig {
        arch: Arch::SageMean,
        num_layers: 2,
        in_dim: 16,
        hidden_dim: 64,
        num_classes: 4,
    };
    let train_cfg = TrainConfig {
        max_epochs: 100,
        param_seed: 0,
        ..TrainConfig::default()
    };
    let run = |policy: PartitionPolicy, p: f64| -> (f64, f64, f64) {
        let sampler = SamplerConfig {
            fanouts: vec![10, 10],
            intra_prob: p,
            batch_size: 30,
            seed: 0,
        };
        let out = commrand::gnn::train(&d, &a, policy, &sampler, model, &train_cfg).expect("train");
        let best = out.best_epoch.expect("epochs ran");
        let acc = out.reports[best].val_acc;
        let footprint = mean(
            &out.reports
                .iter()
                .map(|r| r.mean_input_nodes)
                .collect::<Vec<f64>>(),
        );
        (acc, footprint, out.reports[best].val_loss)
    };

    let (base_acc, base_fp, base_loss) = run(PartitionPolicy::RandRoots, 0.5);
    let (mix_acc, mix_fp, _) = run(mix(0.125), 1.0);
    assert!(base_acc >= 0.95, "baseline accuracy {base_acc} below 0.95");
    // loss actually drops well below the uniform-prediction level
    assert!(
        base_loss < (4.0f64).ln() / 4.0,
        "best val loss {base_loss} not under ln(C)/4"
    );
    assert!(
        base_acc - mix_acc <= 0.02 + 1e-12,
        "biased accuracy {mix_acc} more than 2 points below baseline {base_acc}"
    );
    assert!(
        mix_fp <= 0.9 * base_fp,
        "biased footprint {mix_fp} not 10% below baseline {base_fp}"
    );
    println!(
        "acceptance 08 end-to-end-accuracy-parity: PASS (baseline {base_acc:.4} vs mix {mix_acc:.4}; footprint {base_fp:.0} -> {mix_fp:.0})"
    );
}

// ---------------------------------------------------------------------------
// criterion 9
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str], dir: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_commrand"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn commrand");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn acceptance_09_command_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("sbm.json"),
        serde_json::to_string(&SbmConfig {
            community_sizes: vec![60; 4],
            p_in: 0.12,
            p_out: 0.01,
            feature_dim: 8,
            feature_signal: 2.0,
            label_noise: 0.0,
            train_frac: 0.6,
            val_frac: 0.2,
        })
        .unwrap(),
    )
    .unwrap();
    std::fs::write(
        dir.join("sweep.json"),
        r#"{
            "max_epochs": 2,
            "batch_size": 24,
            "policies": [{"kind": "rand-roots"}, {"kind": "comm-rand-mix", "mix_fraction": 0.5}],
            "p_grid": [0.5, 1.0],
            "seeds": [0]
        }"#,
    )
    .unwrap();

    let pipeline = |tag: &str| {
        let bundle = format!("bundle-{tag}");
        let ordered = format!("ordered-{tag}");
        run_cli(
            &[
                "gen-sbm", "--config", "sbm.json", "--seed", "5", "--out", &bundle,
            ],
            dir,
        );
        run_cli(
            &[
                "detect",
                "--bundle",
                &bundle,
                "--seed",
                "5",
                "--out",
                &format!("assign-{tag}.txt"),
            ],
            dir,
        );
        run_cli(
            &[
                "reorder",
                "--bundle",
                &bundle,
                "--assignment",
                &format!("assign-{tag}.txt"),
                "--out",
                &ordered,
            ],
            dir,
        );
        run_cli(
            &[
                "train",
                "--bundle",
                &ordered,
                "--assignment",
                &format!("{ordered}/assignment.txt"),
                "--max-epochs",
                "3",
                "--seed",
                "1",
                "--no-timing",
                "--out",
                &format!("train-{tag}.csv"),
                "--checkpoint",
                &format!("model-{tag}.ckpt"),
            ],
            dir,
        );
        run_cli(
            &[
                "sweep",
                "--bundle",
                &ordered,
                "--assignment",
                &format!("{ordered}/assignment.txt"),
                "--config",
                "sweep.json",
                "--workers",
                "2",
                "--no-timing",
                "--out",
                &format!("sweep-{tag}.csv"),
            ],
            dir,
        );
        run_cli(
            &[
                "cachesim",
                "--bundle",
                &ordered,
                "--assignment",
                &format!("{ordered}/assignment.txt"),
                "--config",
                "sweep.json",
                "--capacity",
                "60",
                "--epochs",
                "2",
                "--out",
                &format!("cache-{tag}.csv"),
            ],
            dir,
        );
    };
    pipeline("a");
    pipeline("b");

    let read = |name: &str| std::fs::read(dir.join(name)).expect(name);
    for bundle_file in [
        "edges.txt",
        "features.bin",
        "labels.txt",
        "train.txt",
        "val.txt",
        "test.txt",
    ] {
        assert_eq!(
            read(&format!("bundle-a/{bundle_file}")),
            read(&format!("bundle-b/{bundle_file}")),
            "gen-sbm {bundle_file} differs"
        );
        assert_eq!(
            read(&format!("ordered-a/{bundle_file}")),
            read(&format!("ordered-b/{bundle_file}")),
            "reorder {bundle_file} differs"
        );
    }
    for file in [
        "assign-a.txt",
        "train-a.csv",
        "model-a.ckpt",
        "sweep-a.csv",
        "cache-a.csv",
        "ordered-a/assignment.txt",
    ] {
        let twin = file.replace("-a", "-b");
        assert_eq!(read(file), read(&twin), "{file} differs between runs");
    }
    println!("acceptance 09 command-determinism: PASS (all outputs byte-identical)");
}

// ---------------------------------------------------------------------------
// criterion 10
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_community_detection_sanity() {
    // exhaustive oracle: two 4-cliques joined by one bridge edge
    let mut edges = Vec::new();
    for base in [0usize, 4] {
        for i in 0..4 {
            for j in (i + 1)..4 {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((0, 4));
    let g = Graph::from_edges(0, &edges, true).unwrap();
    let best = exhaustive_best_partition(&g);
    assert_eq!(best, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    let a = louvain(&g, 1.0, 3, 20).unwrap();
    assert_eq!(
        a.membership(),
        best.as_slice(),
        "louvain missed the clique split"
    );

    // hand-computed Q = 0.5 for two disconnected triangles
    let g2 = Graph::from_edges(0, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], true).unwrap();
    let a2 = louvain(&g2, 1.0, 3, 20).unwrap();
    assert_eq!(a2.num_communities(), 2);
    let q = modularity(&g2, &a2, 1.0).unwrap();
    assert!((q - 0.5).abs() < 1e-12, "two-triangle modularity {q}");

    // level monotonicity on structured instances
    for seed in 0..3u64 {
        let (d, _) = &sbm_instances()[seed as usize];
        let trace = louvain_trace(&d.graph, 1.0, seed, 20).unwrap();
        for w in trace.level_modularity.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-12,
                "level modularity decreased: {:?}",
                trace.level_modularity
            );
        }
    }
    println!("acceptance 10 community-detection-sanity: PASS (clique split exact, Q=0.5 exact, levels monotone)");
}

fn exhaustive_best_partition(g: &Graph) -> Vec<usize> {
    let n = g.num_nodes();
    let mut best_q = f64::NEG_INFINITY;
    let mut best = vec![0usize; n];
    let mut current = vec![0usize; n];
    fn rec(
        g: &Graph,
        current: &mut Vec<usize>,
        pos: usize,
        max_used: usize,
        best_q: &mut f64,
        best: &mut Vec<usize>,
    ) {
        if pos == current.len() {
            let a = CommunityAssignment::from_membership(current.clone()).unwrap();
            let q = modularity(g, &a, 1.0).unwrap();
            if q > *best_q {
                *best_q = q;
                *best = current.clone();
            }
            return;
        }
        for c in 0..=max_used + 1 {
            current[pos] = c;
            rec(g, current, pos + 1, max_used.max(c), best_q, best);
        }
        current[pos] = 0;
    }
    rec(g, &mut current, 1, 0, &mut best_q, &mut best);
    best
}

// ---------------------------------------------------------------------------
// supporting check: batch plans stay disjoint under every policy (used by
// several criteria above; cheap standalone guard)
// ---------------------------------------------------------------------------

#[test]
fn epoch_plans_partition_training_set_on_the_large_sbm() {
    let (d, a) = &sbm_instances()[0];
    for policy in [
        PartitionPolicy::RandRoots,
        PartitionPolicy::NorandRoots,
        mix(0.125),
    ] {
        let mb = Minibatcher::new(&d.graph, a, &d.train, policy, sampler(0.9, 4)).unwrap();
        let plan = mb.plan(3).unwrap();
        let mut seen: HashSet<NodeId> = HashSet::new();
        for batch in &plan.batches {
            for &v in batch {
                assert!(seen.insert(v));
            }
        }
        assert_eq!(seen.len(), d.train.len());
    }
}
