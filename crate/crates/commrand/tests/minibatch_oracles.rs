//! Partitioning and sampling semantics against enumeration and
//! frequency-count oracles.

use std::collections::{BTreeSet, HashSet};

use commrand::community::CommunityAssignment;
use commrand::graph::{Graph, NodeId};
use commrand::minibatch::{
    build_subgraph, partition_roots, sample_layer, Minibatcher, PartitionPolicy, SamplerConfig,
};
use commrand::sbm::{gen_sbm, SbmConfig};
use commrand::stats::chi_square_stat;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assignment(membership: Vec<usize>) -> CommunityAssignment {
    CommunityAssignment::from_membership(membership).unwrap()
}

#[test]
fn one_superblock_mix_gives_uniform_batch_indices() {
    // Limit case: k covers all communities, so the plan distributes every
    // node's batch index uniformly. Frequency-count oracle over 10^4 seeded
    // epochs, chi-square per node with Bonferroni-corrected alpha = 0.01/12.
    // df = 2, so the critical value is -2 ln(0.01/12) = 14.1823.
    let membership = vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
    let n = membership.len();
    let a = assignment(membership);
    let train: Vec<NodeId> = (0..n).collect();
    let ra = a.restrict_to(&train).unwrap();
    let num_batches = 3;
    let epochs = 10_000usize;
    let mut counts = vec![[0u64; 3]; n];
    for epoch in 0..epochs {
        let plan = partition_roots(
            &train,
            &ra,
            PartitionPolicy::CommRandMix { mix_fraction: 1.0 },
            4,
            epoch,
            commrand::seeds::epoch_seed(424242, epoch),
        )
        .unwrap();
        assert_eq!(plan.batches.len(), num_batches);
        for (b, batch) in plan.batches.iter().enumerate() {
            for &v in batch {
                counts[v][b] += 1;
            }
        }
    }
    let expected = vec![epochs as f64 / num_batches as f64; num_batches];
    for (v, c) in counts.iter().enumerate() {
        let stat = chi_square_stat(c, &expected);
        assert!(stat < 14.1823, "node {v}: chi2 {stat}, counts {c:?}");
    }
}

#[test]
fn sampling_support_matches_exhaustive_enumeration() {
    // Node 0 has neighbors {1,2,3,4}; {1,2} intra, {3,4} inter.
    let edges: Vec<(usize, usize)> = (1..=4).map(|v| (0, v)).collect();
    let g = Graph::from_edges(0, &edges, true).unwrap();
    let a = assignment(vec![0, 0, 0, 1, 1]);

    let observed_support = |p: f64, fanout: usize, trials: usize| -> BTreeSet<Vec<NodeId>> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut seen = BTreeSet::new();
        for _ in 0..trials {
            let edges = sample_layer(&g, &a, &[0], fanout, p, &mut rng);
            let mut srcs: Vec<NodeId> = edges.iter().map(|&(s, _)| s).filter(|&s| s != 0).collect();
            srcs.sort_unstable();
            seen.insert(srcs);
        }
        seen
    };

    // p = 0.9: every 2-subset of the four neighbors has positive probability.
    let mut expected: BTreeSet<Vec<NodeId>> = BTreeSet::new();
    for i in 1..=4usize {
        for j in (i + 1)..=4 {
            expected.insert(vec![i, j]);
        }
    }
    assert_eq!(observed_support(0.9, 2, 5000), expected);

    // p = 1.0: inter edges have zero weight; the only outcome is {1,2}.
    let mut only_intra = BTreeSet::new();
    only_intra.insert(vec![1, 2]);
    assert_eq!(observed_support(1.0, 2, 1000), only_intra);

    // fanout exceeding the admissible neighbors takes all of them
    let mut all = BTreeSet::new();
    all.insert(vec![1, 2, 3, 4]);
    assert_eq!(observed_support(0.5, 10, 200), all);
}

#[test]
fn biased_two_layer_subgraphs_are_smaller_than_uniform() {
    // Two-community toy with cross links; at p=1.0 the two-layer expansion
    // must stay inside the root community, so the input set is strictly
    // smaller on average than with p=0.5.
    let mut edges = Vec::new();
    for base in [0usize, 8] {
        for i in 0..8 {
            for j in (i + 1)..8 {
                if (i + j) % 2 == 0 {
                    edges.push((base + i, base + j));
                }
            }
        }
    }
    for i in 0..4 {
        edges.push((i, 8 + i)); // inter links
    }
    let g = Graph::from_edges(0, &edges, true).unwrap();
    let mut membership = vec![0usize; 16];
    for m in membership.iter_mut().skip(8) {
        *m = 1;
    }
    let a = assignment(membership);
    let mean_input = |p: f64| -> f64 {
        let cfg = SamplerConfig {
            fanouts: vec![10, 10],
            intra_prob: p,
            batch_size: 2,
            seed: 0,
        };
        let mut total = 0usize;
        let trials = 200;
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(t);
            let sub = build_subgraph(&g, &a, &[0, 2], &cfg, &mut rng);
            total += sub.input_nodes().len();
        }
        total as f64 / trials as f64
    };
    let uniform = mean_input(0.5);
    let biased = mean_input(1.0);
    assert!(
        biased < uniform,
        "expected smaller biased subgraphs: biased {biased} vs uniform {uniform}"
    );
}

#[test]
fn rand_roots_touch_more_inputs_than_norand_on_ordered_sbm() {
    let cfg = SbmConfig {
        community_sizes: vec![50; 8],
        p_in: 0.15,
        p_out: 0.005,
        feature_dim: 2,
        feature_signal: 0.0,
        label_noise: 0.0,
        train_frac: 0.6,
        val_frac: 0.2,
    };
    let d = gen_sbm(&cfg, 21).unwrap();
    let a = commrand::louvain(&d.graph, 1.0, 21, 20).unwrap();
    let mean_footprint = |policy: PartitionPolicy| -> f64 {
        let sampler = SamplerConfig {
            fanouts: vec![5, 5],
            intra_prob: 0.5,
            batch_size: 30,
            seed: 7,
        };
        let mb = Minibatcher::new(&d.graph, &a, &d.train, policy, sampler).unwrap();
        let mut total = 0usize;
        let mut batches = 0usize;
        for sub in mb.epoch(0).unwrap() {
            total += sub.input_nodes().len();
            batches += 1;
        }
        total as f64 / batches as f64
    };
    let rand = mean_footprint(PartitionPolicy::RandRoots);
    let norand = mean_footprint(PartitionPolicy::NorandRoots);
    assert!(
        rand > norand,
        "rand-roots {rand} should exceed norand-roots {norand}"
    );
}

#[test]
fn union_of_epoch_roots_is_the_training_set() {
    let cfg = SbmConfig {
        community_sizes: vec![30, 30, 30],
        p_in: 0.2,
        p_out: 0.02,
        feature_dim: 2,
        feature_signal: 0.0,
        label_noise: 0.0,
        train_frac: 0.5,
        val_frac: 0.2,
    };
    let d = gen_sbm(&cfg, 6).unwrap();
    let a = commrand::louvain(&d.graph, 1.0, 6, 20).unwrap();
    for policy in [
        PartitionPolicy::RandRoots,
        PartitionPolicy::NorandRoots,
        PartitionPolicy::CommRandMix { mix_fraction: 0.25 },
    ] {
        let sampler = SamplerConfig {
            fanouts: vec![3],
            intra_prob: 1.0,
            batch_size: 13,
            seed: 77,
        };
        let mb = Minibatcher::new(&d.graph, &a, &d.train, policy, sampler).unwrap();
        for epoch in [0usize, 5] {
            let mut roots: Vec<NodeId> = mb
                .epoch(epoch)
                .unwrap()
                .flat_map(|sub| sub.roots.clone())
                .collect();
            roots.sort_unstable();
            assert_eq!(roots, d.train, "policy {policy} epoch {epoch}");
        }
    }
}

#[test]
fn p_one_never_emits_inter_community_edges() {
    let cfg = SbmConfig {
        community_sizes: vec![40, 40, 40],
        p_in: 0.25,
        p_out: 0.05,
        feature_dim: 2,
        feature_signal: 0.0,
        label_noise: 0.0,
        train_frac: 0.5,
        val_frac: 0.2,
    };
    let d = gen_sbm(&cfg, 31).unwrap();
    let a = commrand::louvain(&d.graph, 1.0, 31, 20).unwrap();
    let sampler = SamplerConfig {
        fanouts: vec![4, 4],
        intra_prob: 1.0,
        batch_size: 16,
        seed: 5,
    };
    let mb = Minibatcher::new(
        &d.graph,
        &a,
        &d.train,
        PartitionPolicy::CommRandMix { mix_fraction: 0.0 },
        sampler,
    )
    .unwrap();
    for sub in mb.epoch(0).unwrap() {
        for block in &sub.blocks {
            for &(s, t) in &block.edges {
                let (u, v) = (block.src_nodes[s], block.dst_nodes[t]);
                if u != v {
                    assert_eq!(a.community_of(u), a.community_of(v), "inter edge ({u},{v})");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn plans_partition_training_set(
        seed in any::<u64>(),
        batch_size in 1usize..20,
        mix in prop::option::of(0.0f64..=1.0),
        epoch in 0usize..50,
    ) {
        let membership: Vec<usize> = (0..60).map(|v| v / 12).collect();
        let a = assignment(membership);
        let train: Vec<NodeId> = (0..60).filter(|v| v % 3 != 1).collect();
        let ra = a.restrict_to(&train).unwrap();
        let policy = match mix {
            Some(mix_fraction) => PartitionPolicy::CommRandMix { mix_fraction },
            None => PartitionPolicy::RandRoots,
        };
        let plan = partition_roots(&train, &ra, policy, batch_size, epoch, seed).unwrap();
        let mut seen = HashSet::new();
        for batch in &plan.batches {
            prop_assert!(batch.len() <= batch_size);
            for &v in batch {
                prop_assert!(seen.insert(v), "node {} twice", v);
            }
        }
        prop_assert_eq!(seen.len(), train.len());
        // all but the last batch are full
        for batch in plan.batches.iter().rev().skip(1) {
            prop_assert_eq!(batch.len(), batch_size);
        }
    }
}
