//! Dataset bundles: graph + node features + labels + train/val/test splits.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{load_edge_list, save_edge_list, Graph, NodeId, Permutation};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.txt";
pub const TRAIN_FILE: &str = "train.txt";
pub const VAL_FILE: &str = "val.txt";
pub const TEST_FILE: &str = "test.txt";

#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    /// Dense row-major features, one row per node.
    pub features: Array2<f32>,
    /// Class id per node, `None` when unlabeled.
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub train: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.nrows() != n {
            return Err(Error::shape(format!(
                "features have {} rows for {} nodes",
                self.features.nrows(),
                n
            )));
        }
        if self.labels.len() != n {
            return Err(Error::shape(format!(
                "labels cover {} of {} nodes",
                self.labels.len(),
                n
            )));
        }
        for &set in &[&self.train, &self.val, &self.test] {
            for &v in set {
                if v >= n {
                    return Err(Error::invalid(format!("mask node {v} out of range")));
                }
            }
        }
        let mut tag = vec![0u8; n];
        for (bit, set) in [(1u8, &self.train), (2, &self.val), (4, &self.test)] {
            for &v in set {
                if tag[v] != 0 {
                    return Err(Error::invalid(format!("node {v} appears in two masks")));
                }
                tag[v] = bit;
            }
        }
        for &v in self.train.iter().chain(self.val.iter()) {
            if self.labels[v].is_none() {
                return Err(Error::invalid(format!("train/val node {v} is unlabeled")));
            }
        }
        for label in self.labels.iter().flatten() {
            if *label >= self.num_classes {
                return Err(Error::invalid(format!(
                    "label {label} >= num_classes {}",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// Rename node `u` to `perm[u]` everywhere: adjacency, features, labels,
    /// masks. Canonical CSR is restored and masks stay sorted.
    pub fn permuted(&self, perm: &Permutation) -> Result<Dataset> {
        if perm.len() != self.num_nodes() {
            return Err(Error::invalid(format!(
                "permutation covers {} nodes, dataset has {}",
                perm.len(),
                self.num_nodes()
            )));
        }
        let graph = self.graph.permuted(perm)?;
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut labels = vec![None; self.labels.len()];
        for old in 0..self.num_nodes() {
            let new = perm.apply(old);
            features.row_mut(new).assign(&self.features.row(old));
            labels[new] = self.labels[old];
        }
        let remap = |set: &[NodeId]| -> Vec<NodeId> {
            let mut out: Vec<NodeId> = set.iter().map(|&v| perm.apply(v)).collect();
            out.sort_unstable();
            out
        };
        Ok(Dataset {
            graph,
            features,
            labels,
            num_classes: self.num_classes,
            train: remap(&self.train),
            val: remap(&self.val),
            test: remap(&self.test),
        })
    }

    pub fn save_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_edge_list(&self.graph, &dir.join(EDGES_FILE))?;
        write_features(&self.features, &dir.join(FEATURES_FILE))?;
        let mut labels = BufWriter::new(std::fs::File::create(dir.join(LABELS_FILE))?);
        for label in &self.labels {
            match label {
                Some(c) => writeln!(labels, "{c}")?,
                None => writeln!(labels, "-1")?,
            }
        }
        labels.flush()?;
        for (name, set) in [
            (TRAIN_FILE, &self.train),
            (VAL_FILE, &self.val),
            (TEST_FILE, &self.test),
        ] {
            let mut f = BufWriter::new(std::fs::File::create(dir.join(name))?);
            for v in set {
                writeln!(f, "{v}")?;
            }
            f.flush()?;
        }
        Ok(())
    }

    /// Load a bundle directory. The graph is symmetrized on load.
    pub fn load_bundle(dir: &Path) -> Result<Dataset> {
        let graph = load_edge_list(&dir.join(EDGES_FILE), true)?;
        let features = read_features(&dir.join(FEATURES_FILE))?;
        let n = graph.num_nodes().max(features.nrows());
        let graph = if graph.num_nodes() < n {
            // isolated tail nodes present in features but not in edges
            Graph::from_edges(n, &csr_edges(&graph), false)?
        } else {
            graph
        };
        let labels = read_labels(&dir.join(LABELS_FILE), n)?;
        let num_classes = labels.iter().flatten().max().map_or(0, |&c| c + 1);
        let dataset = Dataset {
            train: read_node_set(&dir.join(TRAIN_FILE))?,
            val: read_node_set(&dir.join(VAL_FILE))?,
            test: read_node_set(&dir.join(TEST_FILE))?,
            graph,
            features,
            labels,
            num_classes,
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

fn csr_edges(g: &Graph) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::with_capacity(g.num_edges());
    for u in 0..g.num_nodes() {
        for &v in g.neighbors(u) {
            edges.push((u, v));
        }
    }
    edges
}

/// Binary feature matrix: u32 rows, u32 cols (little-endian), then
/// row-major f32 little-endian data.
pub fn write_features(features: &Array2<f32>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&(features.nrows() as u32).to_le_bytes())?;
    out.write_all(&(features.ncols() as u32).to_le_bytes())?;
    for &x in features.iter() {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Array2<f32>> {
    let mut f = BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 8];
    f.read_exact(&mut header)?;
    let rows = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let mut data = vec![0u8; rows * cols * 4];
    f.read_exact(&mut data)?;
    let values: Vec<f32> = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::shape(format!("feature matrix: {e}")))
}

fn read_labels(path: &Path, num_nodes: usize) -> Result<Vec<Option<usize>>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut labels = Vec::with_capacity(num_nodes);
    for (idx, line) in f.lines().enumerate() {
        let line = line?;
        let raw: i64 = line.trim().parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("non-integer label {line:?}"),
        })?;
        labels.push(if raw < 0 { None } else { Some(raw as usize) });
    }
    if labels.len() != num_nodes {
        return Err(Error::shape(format!(
            "label file has {} lines for {} nodes",
            labels.len(),
            num_nodes
        )));
    }
    Ok(labels)
}

fn read_node_set(path: &Path) -> Result<Vec<NodeId>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut nodes = Vec::new();
    for (idx, line) in f.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let v: usize = trimmed.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("non-integer node id {trimmed:?}"),
        })?;
        nodes.push(v);
    }
    nodes.sort_unstable();
    nodes.dedup();
    Ok(nodes)
}
