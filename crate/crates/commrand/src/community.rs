//! Modularity-maximization community detection (Louvain-style) and the
//! community-order permutation used for graph reordering.
//!
//! Detection is deterministic for a fixed seed: node visit order is a seeded
//! shuffle per pass and gain ties break toward the lowest community id.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, Permutation};
use crate::sbm::shuffle;

/// Sentinel for nodes outside a restricted assignment's domain.
pub const NO_COMMUNITY: usize = usize::MAX;

/// Node -> community map with contiguous community ids.
///
/// A full assignment covers every node; an assignment produced by
/// [`CommunityAssignment::restrict_to`] covers a subset and maps the rest to
/// [`NO_COMMUNITY`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunityAssignment {
    membership: Vec<usize>,
    community_sizes: Vec<usize>,
    num_assigned: usize,
}

impl CommunityAssignment {
    /// Build a full assignment from a membership vector. Community ids must
    /// be contiguous from 0 with no empty community.
    pub fn from_membership(membership: Vec<usize>) -> Result<Self> {
        if membership.is_empty() {
            return Err(Error::invalid("assignment must cover at least one node"));
        }
        let num_communities = membership.iter().max().map_or(0, |&c| c + 1);
        let mut sizes = vec![0usize; num_communities];
        for &c in &membership {
            if c == NO_COMMUNITY {
                return Err(Error::invalid("full assignment has an unassigned node"));
            }
            sizes[c] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::invalid(
                "community ids must be contiguous and non-empty",
            ));
        }
        let num_assigned = membership.len();
        Ok(CommunityAssignment {
            membership,
            community_sizes: sizes,
            num_assigned,
        })
    }

    pub fn num_communities(&self) -> usize {
        self.community_sizes.len()
    }

    /// Size of the node-id universe (assigned or not).
    pub fn len(&self) -> usize {
        self.membership.len()
    }

    pub fn is_empty(&self) -> bool {
        self.membership.is_empty()
    }

    pub fn num_assigned(&self) -> usize {
        self.num_assigned
    }

    pub fn is_complete(&self) -> bool {
        self.num_assigned == self.membership.len()
    }

    #[inline]
    pub fn community_of(&self, v: NodeId) -> Option<usize> {
        match self.membership[v] {
            NO_COMMUNITY => None,
            c => Some(c),
        }
    }

    pub fn community_sizes(&self) -> &[usize] {
        &self.community_sizes
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    /// Assigned nodes per community, ascending node ids within each.
    pub fn members_by_community(&self) -> Vec<Vec<NodeId>> {
        let mut out: Vec<Vec<NodeId>> = vec![Vec::new(); self.num_communities()];
        for (v, &c) in self.membership.iter().enumerate() {
            if c != NO_COMMUNITY {
                out[c].push(v);
            }
        }
        out
    }

    /// Permutation placing community members on consecutive ids: nodes sorted
    /// by (community id, original id), mapped old id -> new id.
    ///
    /// Panics if the assignment does not cover every node.
    pub fn order_permutation(&self) -> Permutation {
        assert!(
            self.is_complete(),
            "order_permutation needs a full assignment"
        );
        let mut order: Vec<NodeId> = (0..self.len()).collect();
        order.sort_by_key(|&v| (self.membership[v], v));
        let mut forward = vec![0usize; self.len()];
        for (new, &old) in order.iter().enumerate() {
            forward[old] = new;
        }
        Permutation::new(forward).expect("sorted order is a bijection")
    }

    /// Restrict the assignment to `nodes`: membership outside the set is
    /// dropped, empty communities removed, ids re-compacted preserving the
    /// original community order.
    pub fn restrict_to(&self, nodes: &[NodeId]) -> Result<CommunityAssignment> {
        if nodes.is_empty() {
            return Err(Error::invalid("cannot restrict to an empty node set"));
        }
        let mut keep = vec![false; self.len()];
        for &v in nodes {
            if v >= self.len() {
                return Err(Error::invalid(format!("node {v} out of range")));
            }
            keep[v] = true;
        }
        let mut old_to_new = vec![NO_COMMUNITY; self.num_communities()];
        let mut membership = vec![NO_COMMUNITY; self.len()];
        let mut sizes = Vec::new();
        let mut num_assigned = 0;
        for v in 0..self.len() {
            if !keep[v] {
                continue;
            }
            let c = match self.membership[v] {
                NO_COMMUNITY => {
                    return Err(Error::invalid(format!("node {v} has no community")));
                }
                c => c,
            };
            if old_to_new[c] == NO_COMMUNITY {
                old_to_new[c] = sizes.len();
                sizes.push(0);
            }
            let nc = old_to_new[c];
            membership[v] = nc;
            sizes[nc] += 1;
            num_assigned += 1;
        }
        Ok(CommunityAssignment {
            membership,
            community_sizes: sizes,
            num_assigned,
        })
    }

    /// One "node_id community_id" pair per line; round-trips exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for (v, &c) in self.membership.iter().enumerate() {
            if c != NO_COMMUNITY {
                writeln!(out, "{v} {c}")?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, num_nodes: usize) -> Result<CommunityAssignment> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut membership = vec![NO_COMMUNITY; num_nodes];
        let mut max_comm = None::<usize>;
        let mut num_assigned = 0;
        for (idx, line) in f.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut it = trimmed.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse().ok()).ok_or(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected \"node community\", got {trimmed:?}"),
                })
            };
            let v = parse(it.next())?;
            let c = parse(it.next())?;
            if v >= num_nodes {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("node {v} out of range (num_nodes={num_nodes})"),
                });
            }
            if membership[v] != NO_COMMUNITY {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("node {v} assigned twice"),
                });
            }
            membership[v] = c;
            max_comm = Some(max_comm.map_or(c, |m: usize| m.max(c)));
            num_assigned += 1;
        }
        let num_communities = max_comm.map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; num_communities];
        for &c in &membership {
            if c != NO_COMMUNITY {
                sizes[c] += 1;
            }
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("assignment file has empty community ids"));
        }
        if num_assigned == 0 {
            return Err(Error::invalid("assignment file assigns no nodes"));
        }
        Ok(CommunityAssignment {
            membership,
            community_sizes: sizes,
            num_assigned,
        })
    }
}

/// Q = sum_c [ e_c/m - gamma * (d_c / 2m)^2 ] over undirected edges.
/// Self-loops count once in e_c and m, and twice in d_c.
pub fn modularity(g: &Graph, a: &CommunityAssignment, resolution: f64) -> Result<f64> {
    if !a.is_complete() || a.len() != g.num_nodes() {
        return Err(Error::invalid(
            "modularity needs a full assignment over the graph",
        ));
    }
    let m = g.undirected_edge_count();
    if m == 0 {
        return Err(Error::invalid("modularity undefined for an empty graph"));
    }
    let k = a.num_communities();
    let mut intra = vec![0.0f64; k];
    let mut degree = vec![0.0f64; k];
    for u in 0..g.num_nodes() {
        let cu = a.community_of(u).unwrap();
        for &v in g.neighbors(u) {
            if v == u {
                degree[cu] += 2.0;
                intra[cu] += 1.0;
            } else {
                degree[cu] += 1.0;
                if u < v && a.community_of(v) == Some(cu) {
                    intra[cu] += 1.0;
                }
            }
        }
    }
    let m = m as f64;
    let mut q = 0.0;
    for c in 0..k {
        q += intra[c] / m - resolution * (degree[c] / (2.0 * m)).powi(2);
    }
    Ok(q)
}

/// Flattened top-level Louvain assignment plus the modularity after each
/// aggregation level.
pub struct LouvainTrace {
    pub assignment: CommunityAssignment,
    pub level_modularity: Vec<f64>,
}

pub fn louvain(
    g: &Graph,
    resolution: f64,
    seed: u64,
    max_levels: usize,
) -> Result<CommunityAssignment> {
    Ok(louvain_trace(g, resolution, seed, max_levels)?.assignment)
}

pub fn louvain_trace(
    g: &Graph,
    resolution: f64,
    seed: u64,
    max_levels: usize,
) -> Result<LouvainTrace> {
    if g.num_nodes() == 0 {
        return Err(Error::invalid("louvain needs at least one node"));
    }
    if !g.is_symmetric() {
        return Err(Error::invalid("louvain needs a symmetrized graph"));
    }
    let n = g.num_nodes();
    let singletons = || CommunityAssignment::from_membership((0..n).collect());
    if g.num_edges() == 0 {
        return Ok(LouvainTrace {
            assignment: singletons()?,
            level_modularity: Vec::new(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = WorkGraph::from_graph(g);
    // original node -> current supernode
    let mut node_map: Vec<usize> = (0..n).collect();
    let mut best = singletons()?;
    let mut level_modularity = Vec::new();

    for _level in 0..max_levels {
        let (comm, moved) = local_moving(&work, resolution, &mut rng);
        if !moved {
            break;
        }
        let compact = compact_ids(&comm);
        let flat: Vec<usize> = node_map.iter().map(|&s| compact[comm[s]]).collect();
        let assignment = CommunityAssignment::from_membership(compact_by_first_appearance(&flat))?;
        level_modularity.push(modularity(g, &assignment, resolution)?);
        best = assignment;
        let next = work.aggregate(&comm, &compact);
        if next.len() == work.len() {
            break;
        }
        for s in node_map.iter_mut() {
            *s = compact[comm[*s]];
        }
        work = next;
    }

    Ok(LouvainTrace {
        assignment: best,
        level_modularity,
    })
}

/// Weighted working graph for the aggregation hierarchy. Input self-loops
/// feed node degrees (weight 2 per loop) but are excluded from adjacency, so
/// they never influence move gains.
struct WorkGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_weight: Vec<f64>,
    total_weight: f64, // 2m
}

impl WorkGraph {
    fn from_graph(g: &Graph) -> WorkGraph {
        let n = g.num_nodes();
        let mut adj = vec![Vec::new(); n];
        let mut self_weight = vec![0.0; n];
        for u in 0..n {
            for &v in g.neighbors(u) {
                if v == u {
                    self_weight[u] += 2.0;
                } else {
                    adj[u].push((v, 1.0));
                }
            }
        }
        let total_weight = self_weight.iter().sum::<f64>()
            + adj
                .iter()
                .map(|r| r.iter().map(|&(_, w)| w).sum::<f64>())
                .sum::<f64>();
        WorkGraph {
            adj,
            self_weight,
            total_weight,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn degree(&self, i: usize) -> f64 {
        self.self_weight[i] + self.adj[i].iter().map(|&(_, w)| w).sum::<f64>()
    }

    fn aggregate(&self, comm: &[usize], compact: &[usize]) -> WorkGraph {
        let k = compact
            .iter()
            .filter(|&&c| c != NO_COMMUNITY)
            .map(|&c| c + 1)
            .max()
            .unwrap_or(0);
        let mut self_weight = vec![0.0; k];
        let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.len() {
            let ci = compact[comm[i]];
            self_weight[ci] += self.self_weight[i];
            for &(j, w) in &self.adj[i] {
                let cj = compact[comm[j]];
                if ci == cj {
                    // both directions land here, totalling 2x the undirected weight
                    self_weight[ci] += w;
                } else {
                    *acc[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adj = acc
            .into_iter()
            .map(|row| row.into_iter().collect::<Vec<_>>())
            .collect();
        WorkGraph {
            adj,
            self_weight,
            total_weight: self.total_weight,
        }
    }
}

/// One level of local moving. Returns (community per node, any move made).
fn local_moving(work: &WorkGraph, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = work.len();
    let two_m = work.total_weight;
    let k: Vec<f64> = (0..n).map(|i| work.degree(i)).collect();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut comm_tot = k.clone();
    let mut any_move = false;
    const EPS: f64 = 1e-12;

    loop {
        let mut moved_this_pass = false;
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut order, rng);
        for &i in &order {
            let ci = comm[i];
            let mut w_to: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, w) in &work.adj[i] {
                *w_to.entry(comm[j]).or_insert(0.0) += w;
            }
            comm_tot[ci] -= k[i];
            let stay_gain =
                w_to.get(&ci).copied().unwrap_or(0.0) - resolution * comm_tot[ci] * k[i] / two_m;
            let mut best_c = ci;
            let mut best_gain = stay_gain;
            for (&c, &w) in &w_to {
                if c == ci {
                    continue;
                }
                let gain = w - resolution * comm_tot[c] * k[i] / two_m;
                if gain > best_gain + EPS || ((gain - best_gain).abs() <= EPS && c < best_c) {
                    best_gain = gain;
                    best_c = c;
                }
            }
            comm[i] = best_c;
            comm_tot[best_c] += k[i];
            if best_c != ci {
                moved_this_pass = true;
                any_move = true;
            }
        }
        if !moved_this_pass {
            break;
        }
    }
    (comm, any_move)
}

/// Map sparse community labels to contiguous ids ordered by label value.
fn compact_ids(comm: &[usize]) -> Vec<usize> {
    let max = comm.iter().copied().max().unwrap_or(0);
    let mut compact = vec![NO_COMMUNITY; max + 1];
    let mut used: Vec<usize> = comm.to_vec();
    used.sort_unstable();
    used.dedup();
    for (new, &old) in used.iter().enumerate() {
        compact[old] = new;
    }
    compact
}

/// Relabel membership so community ids follow first appearance in node order.
fn compact_by_first_appearance(membership: &[usize]) -> Vec<usize> {
    let max = membership.iter().copied().max().unwrap_or(0);
    let mut relabel = vec![NO_COMMUNITY; max + 1];
    let mut next = 0;
    let mut out = Vec::with_capacity(membership.len());
    for &c in membership {
        if relabel[c] == NO_COMMUNITY {
            relabel[c] = next;
            next += 1;
        }
        out.push(relabel[c]);
    }
    out
}
