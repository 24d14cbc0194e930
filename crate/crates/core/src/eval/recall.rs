use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Radii 0..=20 frames.
pub const MAX_RADIUS: usize = 20;

/// Outcome of one evaluated query window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    /// Query row at the window center.
    pub query: usize,
    pub truth: usize,
    pub best: usize,
    pub score: f64,
    /// Unique candidates examined.
    pub n_r: usize,
    /// Window frames redirected to a nearest occupied address.
    pub fallback_frames: usize,
    /// Smallest `|candidate - truth|` over the candidate list.
    pub nearest_candidate: usize,
}

impl MatchRecord {
    pub fn error(&self) -> usize {
        self.best.abs_diff(self.truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub dataset: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub noise_scale: f64,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean_nr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub radii: Vec<usize>,
    pub recall: Vec<f64>,
    pub meta: CurveMeta,
}

/// Fraction of `(truth, returned)` pairs with `|returned - truth| <= radius`.
pub fn recall_at(matches: &[(usize, usize)], radius: usize) -> Result<f64> {
    if matches.is_empty() {
        return invalid("recall of an empty match list");
    }
    let hits = matches.iter().filter(|(t, r)| t.abs_diff(*r) <= radius).count();
    Ok(hits as f64 / matches.len() as f64)
}

/// Fraction of records whose candidate list held a place within `radius`.
pub fn in_list_recall_at(records: &[MatchRecord], radius: usize) -> Result<f64> {
    if records.is_empty() {
        return invalid("recall of an empty match list");
    }
    let hits = records.iter().filter(|r| r.nearest_candidate <= radius).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Selected-match recall for radii `0..=MAX_RADIUS`, or candidate-list recall
/// when `in_list` is set.
pub fn recall_curve(records: &[MatchRecord], mut meta: CurveMeta, in_list: bool) -> Result<RecallCurve> {
    if records.is_empty() {
        return invalid("recall of an empty match list");
    }
    let pairs: Vec<(usize, usize)> = records.iter().map(|r| (r.truth, r.best)).collect();
    let radii: Vec<usize> = (0..=MAX_RADIUS).collect();
    let recall = radii
        .iter()
        .map(|&r| if in_list { in_list_recall_at(records, r) } else { recall_at(&pairs, r) })
        .collect::<Result<Vec<_>>>()?;
    meta.mean_nr = records.iter().map(|r| r.n_r as f64).sum::<f64>() / records.len() as f64;
    Ok(RecallCurve { radii, recall, meta })
}
