//! Run artifacts: `metrics.csv`, `summary.json`, `pca.csv`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::train::{EpochMetrics, EvalMetrics, StopReason};

use super::pca::PcaResult;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PCA_FILE: &str = "pca.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Epoch whose weights were kept; 0 means the initial weights.
    pub best_epoch: usize,
    /// Last epoch that ran to completion.
    pub stop_epoch: usize,
    pub stop: StopReason,
    pub parameters: usize,
    pub train: EvalMetrics,
    pub val: EvalMetrics,
    /// Absent when the dataset has no test split.
    pub test: Option<EvalMetrics>,
    pub config: RunConfig,
}

pub fn metrics_csv(history: &[EpochMetrics], record_wall_time: bool) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,train_token_acc,val_token_acc,wall_time\n");
    for m in history {
        let wall = if record_wall_time { m.wall_time } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.epoch, m.train_loss, m.val_loss, m.train_token_acc, m.val_token_acc, wall
        )
        .expect("writing to a String");
    }
    out
}

pub fn summary_json(summary: &RunSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes") + "\n"
}

/// One row per token: `token_index,pc1[,pc2]`, with the explained variance
/// ratios in `#` comment lines above the header.
pub fn pca_csv(result: &PcaResult) -> String {
    let k = result.explained_variance_ratio.len();
    let mut out = String::new();
    for (c, r) in result.explained_variance_ratio.iter().enumerate() {
        writeln!(out, "# explained_variance_ratio_pc{}={r}", c + 1).expect("writing to a String");
    }
    out.push_str("token_index");
    for c in 0..k {
        write!(out, ",pc{}", c + 1).expect("writing to a String");
    }
    out.push('\n');
    for (i, row) in result.projections.data().chunks_exact(k).enumerate() {
        write!(out, "{i}").expect("writing to a String");
        for v in row {
            write!(out, ",{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

/// Writes the metrics CSV and summary JSON into `dir`.
pub fn emit_run_report(dir: &Path, history: &[EpochMetrics], summary: &RunSummary) -> Result<()> {
    ensure_dir(dir)?;
    write_file(
        &dir.join(METRICS_FILE),
        &metrics_csv(history, summary.config.record_wall_time),
    )?;
    write_file(&dir.join(SUMMARY_FILE), &summary_json(summary))
}
