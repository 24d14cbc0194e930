//! Evaluation: recall curves, storage and compute accounting, cluster balance
//! diagnostics, and report files.

mod balance;
mod ops;
mod recall;
mod report;
mod storage;

pub use balance::{cluster_balance, ClusterBalance};
pub use ops::{op_count, throughput_hz, OpConfig, OpCount, SystemKind};
pub use recall::{in_list_recall_at, recall_at, recall_curve, CurveMeta, MatchRecord, RecallCurve, MAX_RADIUS};
pub use report::{emit_report, render_csv, render_svg};
pub use storage::{measure_storage, storage_report, MeasuredStorage, StorageConfig, StorageReport};
