use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hashindex::InvertedIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageConfig {
    #[serde(rename = "N_x")]
    pub ref_count: u64,
    #[serde(rename = "D")]
    pub input_dims: u64,
    pub d: u64,
    #[serde(rename = "K")]
    pub k: u64,
}

/// Sizes actually written by `train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredStorage {
    pub p1_bytes: u64,
    pub single_best_bytes: u64,
    pub p2_bytes: u64,
    pub p3_bytes: u64,
    pub p4_bytes: u64,
    /// Per-component variances kept alongside the projection.
    pub variance_bytes: u64,
    pub index_file_bytes: u64,
}

/// Modelled storage of the four persisted parts, 8 bytes per stored value:
/// P1 one address per place, P2 the centers, P3 the projection, P4 the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub p1_bytes: u64,
    pub p2_bytes: u64,
    pub p3_bytes: u64,
    pub p4_bytes: u64,
    pub model_bytes_per_place: f64,
    pub measured: Option<MeasuredStorage>,
}

impl StorageReport {
    pub fn total_bytes(&self) -> u64 {
        self.p1_bytes + self.p2_bytes + self.p3_bytes + self.p4_bytes
    }

    /// Decimal megabytes.
    pub fn total_mb(&self) -> f64 {
        self.total_bytes() as f64 / 1e6
    }
}

pub fn storage_report(cfg: StorageConfig) -> StorageReport {
    let p1 = 8 * cfg.ref_count;
    let p2 = 8 * cfg.d * cfg.k;
    let p3 = 8 * cfg.d * cfg.input_dims;
    let p4 = 8 * cfg.input_dims;
    let total = p1 + p2 + p3 + p4;
    StorageReport {
        p1_bytes: p1,
        p2_bytes: p2,
        p3_bytes: p3,
        p4_bytes: p4,
        model_bytes_per_place: if cfg.ref_count == 0 {
            0.0
        } else {
            total as f64 / cfg.ref_count as f64
        },
        measured: None,
    }
}

/// Reads back the part sizes of a trained model directory.
pub fn measure_storage(dir: impl AsRef<Path>, index: &InvertedIndex, input_dims: u64, d: u64) -> Result<MeasuredStorage> {
    let dir = dir.as_ref();
    let index_file_bytes = fs::metadata(dir.join("index.chx"))?.len();
    let p2_bytes = fs::metadata(dir.join("quantizer.bin"))?.len();
    let pca_bytes = fs::metadata(dir.join("pca.bin"))?.len();
    // pca.bin = mean (D) + components (d x D) + variances (d)
    let p4_bytes = 8 * input_dims;
    let variance_bytes = 8 * d;
    let p3_bytes = pca_bytes.saturating_sub(p4_bytes + variance_bytes);
    Ok(MeasuredStorage {
        p1_bytes: index.p1_section_bytes(),
        single_best_bytes: index.single_best_section_bytes(),
        p2_bytes,
        p3_bytes,
        p4_bytes,
        variance_bytes,
        index_file_bytes,
    })
}
