use serde::{Deserialize, Serialize};

use crate::hashindex::InvertedIndex;
use crate::quantizer::Quantizer;

/// Share of references assigned to each cluster, per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBalance {
    /// `fractions[j][k]`: share of references whose dimension `j` took center `k`.
    pub fractions: Vec<Vec<f64>>,
}

impl ClusterBalance {
    /// `max_k |fraction - 1/K|` for dimension `j`.
    pub fn imbalance(&self, j: usize) -> f64 {
        let row = &self.fractions[j];
        let uniform = 1.0 / row.len() as f64;
        row.iter().map(|f| (f - uniform).abs()).fold(0.0, f64::max)
    }

    pub fn max_imbalance(&self, dims: std::ops::Range<usize>) -> f64 {
        dims.map(|j| self.imbalance(j)).fold(0.0, f64::max)
    }

    /// Dimensions where every reference fell into one cluster.
    pub fn degenerate_dims(&self) -> Vec<usize> {
        (0..self.fractions.len())
            .filter(|&j| self.fractions[j].contains(&1.0))
            .collect()
    }
}

/// Cluster occupancy read from the addresses the references were stored under.
pub fn cluster_balance(idx: &InvertedIndex, qz: &Quantizer) -> ClusterBalance {
    let (d, k) = (qz.d(), qz.k());
    let mut counts = vec![vec![0u64; k]; d];
    let mut digits = vec![0u16; d];
    for &h in idx.ref_addresses() {
        qz.unhash_into(h, &mut digits);
        for (j, &q) in digits.iter().enumerate() {
            counts[j][q as usize] += 1;
        }
    }
    let n = idx.ref_count() as f64;
    ClusterBalance {
        fractions: counts
            .into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / n).collect())
            .collect(),
    }
}
