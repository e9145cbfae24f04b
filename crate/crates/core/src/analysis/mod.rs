//! Embedding geometry (PCA, and how well a 1-D projection recovers token
//! order) plus the files a run leaves behind.

pub mod order;
pub mod pca;
pub mod report;

pub use order::{average_ranks, order_diagnostic, OrderDiagnostic};
pub use pca::{pca, PcaResult};
pub use report::{emit_run_report, metrics_csv, pca_csv, summary_json, RunSummary};
