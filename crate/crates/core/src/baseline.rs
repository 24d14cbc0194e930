//! Storage-matched linear-scan baseline.
//!
//! References are kept as their leading `d_b` principal coordinates only. A
//! query window shortlists the `cap` references closest to its center frame,
//! then picks the shortlisted reference whose aligned `L`-frame sum of
//! Euclidean distances is smallest.

use crate::error::{invalid, Result};
use crate::matrix::DescriptorMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMatch {
    pub best: usize,
    pub score: f64,
    /// Shortlisted references, ascending.
    pub candidates: Vec<u32>,
}

/// Fails unless `d_b` floats per place fit in the proposed index's 8 bytes.
pub fn check_storage_parity(ref_count: usize, d_b: usize) -> Result<()> {
    let baseline = 4 * ref_count as u64 * d_b as u64;
    let proposed = 8 * ref_count as u64;
    if d_b == 0 || baseline > proposed {
        return invalid(format!(
            "baseline with d_b={d_b} stores {baseline} bytes, more than the {proposed} bytes of the hash index"
        ));
    }
    Ok(())
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, y)| (x as f64 - y) * (x as f64 - y)).sum()
}

/// Matches one window of `d_b`-dim query frames against `refs`.
pub fn baseline_match(refs: &DescriptorMatrix, window: &[Vec<f64>], l: usize, cap: usize) -> Result<BaselineMatch> {
    if window.is_empty() || window.len() != l {
        return invalid(format!("window has {} frames, L = {l}", window.len()));
    }
    if cap == 0 {
        return invalid("candidate cap must be >= 1");
    }
    if let Some(f) = window.iter().position(|q| q.len() != refs.dims()) {
        return invalid(format!("query frame {f} is not {}-dim", refs.dims()));
    }
    let n = refs.rows();
    let center = &window[l / 2];
    let mut dists: Vec<(f64, u32)> = refs
        .iter_rows()
        .enumerate()
        .map(|(i, r)| (sq_dist(r, center), i as u32))
        .collect();
    let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cap < n {
        dists.select_nth_unstable_by(cap - 1, cmp);
        dists.truncate(cap);
    }
    let mut candidates: Vec<u32> = dists.into_iter().map(|(_, i)| i).collect();
    candidates.sort_unstable();

    let half = (l / 2) as i64;
    let last = n as i64 - 1;
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in &candidates {
        let mut s = 0.0;
        for (k, q) in window.iter().enumerate() {
            let r = (i as i64 + k as i64 - half).clamp(0, last) as usize;
            s += sq_dist(refs.row(r), q).sqrt();
        }
        if s < best.0 {
            best = (s, i as usize);
        }
    }
    Ok(BaselineMatch {
        best: best.1,
        score: best.0,
        candidates,
    })
}
