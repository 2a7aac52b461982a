//! Per-epoch training metrics: feature footprint, label diversity, Pearson
//! correlation, and CSV emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::minibatch::BatchSubgraph;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub mean_input_nodes: f64,
    pub mean_feature_bytes: f64,
    pub mean_labels_per_batch: f64,
    pub epoch_wall_time_s: f64,
    pub cache_miss_rate: Option<f64>,
    pub lr: f64,
}

pub const EPOCH_REPORT_HEADER: &str = "epoch,train_loss,val_loss,val_acc,mean_input_nodes,mean_feature_bytes,mean_labels_per_batch,epoch_wall_time_s,cache_miss_rate,lr";

impl EpochReport {
    pub fn csv_row(&self) -> String {
        let cache = self
            .cache_miss_rate
            .map(|r| r.to_string())
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.val_loss,
            self.val_acc,
            self.mean_input_nodes,
            self.mean_feature_bytes,
            self.mean_labels_per_batch,
            self.epoch_wall_time_s,
            cache,
            self.lr
        )
    }
}

/// Write reports as CSV. `header_comments` lines are emitted first, each
/// prefixed with "# ".
pub fn write_report_csv(
    path: &Path,
    reports: &[EpochReport],
    header_comments: &[String],
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in header_comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{EPOCH_REPORT_HEADER}")?;
    for report in reports {
        writeln!(out, "{}", report.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

/// JSON variant of the report file, carrying the resolved config alongside
/// the rows.
pub fn write_report_json(
    path: &Path,
    config: &serde_json::Value,
    reports: &[EpochReport],
) -> Result<()> {
    let doc = serde_json::json!({
        "config": config,
        "reports": reports,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

/// Unique input nodes of a batch and the bytes their feature rows occupy.
pub fn feature_footprint(
    sub: &BatchSubgraph,
    feature_dim: usize,
    bytes_per_elem: usize,
) -> (usize, usize) {
    let unique = sub.input_nodes().len();
    (unique, unique * feature_dim * bytes_per_elem)
}

/// Number of distinct label values among the roots. Errors if any root is
/// unlabeled.
pub fn labels_per_batch(roots: &[NodeId], labels: &[Option<usize>]) -> Result<usize> {
    let mut seen = std::collections::HashSet::new();
    for &v in roots {
        match labels.get(v).copied().flatten() {
            Some(label) => {
                seen.insert(label);
            }
            None => return Err(Error::invalid(format!("root {v} is unlabeled"))),
        }
    }
    Ok(seen.len())
}

/// Sample Pearson correlation. Errors on length mismatch, fewer than two
/// points, or zero variance on either side.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("pearson needs equal-length samples"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid("pearson needs at least two points"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson undefined for zero variance"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
