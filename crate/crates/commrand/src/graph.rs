//! Immutable CSR graph storage.
//!
//! The canonical in-memory form used by every other module: row offsets plus
//! column indices, rows sorted strictly increasing. Undirected graphs are
//! stored symmetrized (both directions present). Membership queries are
//! binary searches over the sorted rows.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Bijection over `[0, n)` mapping old node ids to new node ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
}

impl Permutation {
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut seen = vec![false; n];
        for &t in &forward {
            if t >= n {
                return Err(Error::invalid(format!(
                    "permutation target {t} out of range for {n} nodes"
                )));
            }
            if seen[t] {
                return Err(Error::invalid(format!("permutation target {t} repeated")));
            }
            seen[t] = true;
        }
        Ok(Permutation { forward })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            forward: (0..n).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.forward.len()];
        for (old, &new) in self.forward.iter().enumerate() {
            inv[new] = old;
        }
        Permutation { forward: inv }
    }

    #[inline]
    pub fn apply(&self, v: NodeId) -> NodeId {
        self.forward[v]
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.forward
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &t)| i == t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    row_offsets: Vec<usize>,
    col_indices: Vec<NodeId>,
}

impl Graph {
    /// Build a canonical CSR graph from a directed edge list. Duplicate
    /// edges collapse; self-loops are kept as given. `num_nodes` may exceed
    /// the largest endpoint to allow isolated tail nodes.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(NodeId, NodeId)],
        symmetrize: bool,
    ) -> Result<Graph> {
        let mut n = num_nodes;
        for &(u, v) in edges {
            n = n.max(u + 1).max(v + 1);
        }
        let mut all: Vec<(NodeId, NodeId)> = Vec::with_capacity(if symmetrize {
            edges.len() * 2
        } else {
            edges.len()
        });
        for &(u, v) in edges {
            all.push((u, v));
            if symmetrize && u != v {
                all.push((v, u));
            }
        }
        all.sort_unstable();
        all.dedup();

        let mut row_offsets = vec![0usize; n + 1];
        for &(u, _) in &all {
            row_offsets[u + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = all.into_iter().map(|(_, v)| v).collect();
        Ok(Graph {
            row_offsets,
            col_indices,
        })
    }

    pub fn empty(num_nodes: usize) -> Graph {
        Graph {
            row_offsets: vec![0; num_nodes + 1],
            col_indices: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// Directed edge count (symmetrized graphs count each undirected edge twice).
    pub fn num_edges(&self) -> usize {
        self.col_indices.len()
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    pub fn checked_neighbors(&self, v: NodeId) -> Result<&[NodeId]> {
        if v >= self.num_nodes() {
            return Err(Error::invalid(format!(
                "node {v} out of range (num_nodes={})",
                self.num_nodes()
            )));
        }
        Ok(self.neighbors(v))
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn num_self_loops(&self) -> usize {
        (0..self.num_nodes())
            .filter(|&v| self.has_edge(v, v))
            .count()
    }

    /// Undirected edge count m used by modularity; requires a symmetric graph.
    /// Self-loops count once.
    pub fn undirected_edge_count(&self) -> usize {
        (self.num_edges() + self.num_self_loops()) / 2
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes()).all(|u| self.neighbors(u).iter().all(|&v| self.has_edge(v, u)))
    }

    /// Relabel node ids through `perm` (old -> new), restoring canonical CSR.
    pub fn permuted(&self, perm: &Permutation) -> Result<Graph> {
        if perm.len() != self.num_nodes() {
            return Err(Error::invalid(format!(
                "permutation covers {} nodes, graph has {}",
                perm.len(),
                self.num_nodes()
            )));
        }
        let mut edges = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                edges.push((perm.apply(u), perm.apply(v)));
            }
        }
        Graph::from_edges(self.num_nodes(), &edges, false)
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[NodeId] {
        &self.col_indices
    }
}

/// Parse a whitespace-separated "u v" edge list. Lines starting with '#'
/// are comments; blank lines are skipped.
pub fn load_edge_list(path: &Path, symmetrize: bool) -> Result<Graph> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let u = parse_node(it.next(), lineno)?;
        let v = parse_node(it.next(), lineno)?;
        if let Some(extra) = it.next() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("unexpected trailing token {extra:?}"),
            });
        }
        edges.push((u, v));
    }
    Graph::from_edges(0, &edges, symmetrize)
}

fn parse_node(token: Option<&str>, lineno: usize) -> Result<NodeId> {
    let token = token.ok_or(Error::Parse {
        line: lineno,
        msg: "expected two node ids".into(),
    })?;
    // i64 first so "-3" reports a negative-id error, not a generic one.
    let raw: i64 = token.parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("non-integer token {token:?}"),
    })?;
    if raw < 0 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("negative node id {raw}"),
        });
    }
    Ok(raw as NodeId)
}

/// Write an edge list loadable by [`load_edge_list`]. Symmetric graphs emit
/// each undirected edge once (u <= v); asymmetric graphs emit all directed
/// edges.
pub fn save_edge_list(g: &Graph, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let one_direction = g.is_symmetric();
    for u in 0..g.num_nodes() {
        for &v in g.neighbors(u) {
            if !one_direction || u <= v {
                writeln!(out, "{u} {v}")?;
            }
        }
    }
    Ok(())
}
