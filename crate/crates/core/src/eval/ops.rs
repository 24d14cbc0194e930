//! Unitary-operation (addition or multiplication) counts per query frame.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Proposed,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpConfig {
    #[serde(rename = "D")]
    pub input_dims: u64,
    pub d: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "N_x")]
    pub ref_count: u64,
    #[serde(rename = "N_r")]
    pub candidates: u64,
    /// New reference/query pairs per frame (L').
    pub new_pairs: u64,
    /// Machine word width in bits.
    pub precision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpCount {
    /// Mean subtraction plus projection: `D + d(2D - 1)`.
    pub pca_ops: u64,
    /// Nearest-center assignment: `d(2K - 1)`.
    pub quant_ops: u64,
    /// Base-K address: `2d - 1`.
    pub hash_ops: u64,
    /// Candidate retrieval: dictionary access for the hash index, `3 d N_x`
    /// for the linear scan.
    pub lookup_ops: u64,
    /// Cumulative-score update: `3 N_r - 1`.
    pub score_update_ops: u64,
    /// Sequence scoring: `L' N_r (d/p + d - 1)` for the hash index; the score
    /// update alone for the baseline.
    pub seq_ops: f64,
}

impl OpCount {
    pub fn total(&self) -> f64 {
        (self.pca_ops + self.quant_ops + self.hash_ops + self.lookup_ops) as f64 + self.seq_ops
    }
}

pub fn op_count(cfg: OpConfig, system: SystemKind) -> Result<OpCount> {
    if cfg.precision != 32 && cfg.precision != 64 {
        return invalid(format!("precision must be 32 or 64 bits, got {}", cfg.precision));
    }
    if cfg.d == 0 || cfg.input_dims == 0 {
        return invalid("d and D must be >= 1");
    }
    let OpConfig {
        input_dims: big_d,
        d,
        k,
        ref_count,
        candidates: n_r,
        new_pairs,
        precision: p,
    } = cfg;
    let pca_ops = big_d + d * (2 * big_d - 1);
    let score_update_ops = (3 * n_r).saturating_sub(1);
    Ok(match system {
        SystemKind::Proposed => {
            if k < 2 {
                return invalid("K must be >= 2");
            }
            OpCount {
                pca_ops,
                quant_ops: d * (2 * k - 1),
                hash_ops: 2 * d - 1,
                lookup_ops: 0,
                score_update_ops,
                seq_ops: (new_pairs * n_r) as f64 * (d as f64 / p as f64 + d as f64 - 1.0),
            }
        }
        SystemKind::Baseline => OpCount {
            pca_ops,
            quant_ops: 0,
            hash_ops: 0,
            lookup_ops: 3 * d * ref_count,
            score_update_ops,
            seq_ops: score_update_ops as f64,
        },
    })
}

/// Localizations per second a platform of `ops_per_second` sustains.
pub fn throughput_hz(ops_per_second: f64, ops_per_localization: f64) -> f64 {
    ops_per_second / ops_per_localization
}
