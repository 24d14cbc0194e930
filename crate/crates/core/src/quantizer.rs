//! Per-dimension scalar quantization and base-K hash addresses.
//!
//! Indices are 0-based: dimension `j` of a vector maps to the index of its
//! nearest center in `0..K`, and the address is the base-K number whose most
//! significant digit is dimension 0.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, format_err, invalid, Result};
use crate::matrix::DescriptorMatrix;

const MAX_ITERATIONS: usize = 100;
const CONVERGENCE: f64 = 1e-6;
const MAX_ADDRESS_SPACE: u64 = 1 << 63;

pub type HashAddress = u64;

/// Quantization index vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantVector(pub Vec<u16>);

impl QuantVector {
    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    k: usize,
    d: usize,
    /// `d x K`, each row strictly increasing.
    centers: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct QuantizerHeader {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
}

/// Rejects `(K, d)` whose address space does not fit in 63 bits.
pub fn check_address_space(k: usize, d: usize) -> Result<u64> {
    if k < 2 || d == 0 {
        return invalid(format!("need K >= 2 and d >= 1, got K={k}, d={d}"));
    }
    match (k as u64).checked_pow(d as u32) {
        Some(n) if n <= MAX_ADDRESS_SPACE && d <= u32::MAX as usize => Ok(n),
        _ => invalid(format!("address space K^d = {k}^{d} exceeds 2^63")),
    }
}

impl Quantizer {
    pub fn from_centers(k: usize, d: usize, centers: Vec<f64>) -> Result<Self> {
        check_address_space(k, d)?;
        if k > u16::MAX as usize + 1 {
            return invalid(format!("K={k} too large"));
        }
        if centers.len() != k * d {
            return invalid(format!("expected {} centers, got {}", k * d, centers.len()));
        }
        for j in 0..d {
            let row = &centers[j * k..(j + 1) * k];
            if row.iter().any(|c| !c.is_finite()) || row.windows(2).any(|w| w[0] >= w[1]) {
                return invalid(format!("centers of dimension {j} are not strictly increasing"));
            }
        }
        Ok(Self { k, d, centers })
    }

    /// One-dimensional K-means per column. K = 2 is solved exactly by scanning
    /// split points; larger K runs Lloyd iterations from the `(k + 0.5) / K`
    /// quantiles until no center moves more than 1e-6.
    pub fn fit(refs: &DescriptorMatrix, k: usize) -> Result<Self> {
        let d = refs.dims();
        check_address_space(k, d)?;
        if k > refs.rows() {
            return invalid(format!("K={k} exceeds the {} reference rows", refs.rows()));
        }
        let mut centers = Vec::with_capacity(d * k);
        let mut column = Vec::with_capacity(refs.rows());
        for j in 0..d {
            column.clear();
            column.extend(refs.iter_rows().map(|r| r[j] as f64));
            column.sort_by(f64::total_cmp);
            centers.extend(kmeans_1d(&column, k).map_err(|e| match e {
                crate::Error::Degenerate(m) => crate::Error::Degenerate(format!("dimension {j}: {m}")),
                other => other,
            })?);
        }
        Self::from_centers(k, d, centers)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn centers(&self, j: usize) -> &[f64] {
        &self.centers[j * self.k..(j + 1) * self.k]
    }

    pub fn center(&self, j: usize, idx: u16) -> f64 {
        self.centers[j * self.k + idx as usize]
    }

    pub fn address_space(&self) -> u64 {
        (self.k as u64).pow(self.d as u32)
    }

    /// Nearest center of `x` in dimension `j`; ties go to the lower index.
    #[inline]
    pub fn nearest(&self, j: usize, x: f64) -> u16 {
        let row = self.centers(j);
        // First center whose upper decision boundary is >= x.
        let mut lo = 0usize;
        let mut hi = row.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if x <= 0.5 * (row[mid] + row[mid + 1]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo as u16
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.d {
            return invalid(format!("vector has {len} dims, quantizer has {}", self.d));
        }
        Ok(())
    }

    pub fn quantize(&self, v: &[f64]) -> Result<QuantVector> {
        self.check_len(v.len())?;
        Ok(QuantVector(v.iter().enumerate().map(|(j, &x)| self.nearest(j, x)).collect()))
    }

    pub fn quantize_f32(&self, v: &[f32]) -> Result<QuantVector> {
        self.check_len(v.len())?;
        Ok(QuantVector(v.iter().enumerate().map(|(j, &x)| self.nearest(j, x as f64)).collect()))
    }

    pub fn hash(&self, q: &QuantVector) -> Result<HashAddress> {
        self.check_len(q.len())?;
        let k = self.k as u64;
        let mut h = 0u64;
        for (j, &digit) in q.0.iter().enumerate() {
            if digit as usize >= self.k {
                return invalid(format!("index {digit} at dimension {j} is not below K={}", self.k));
            }
            h = h * k + digit as u64;
        }
        Ok(h)
    }

    /// Writes the base-K digits of `h` into `out` (dimension 0 first).
    pub fn unhash_into(&self, h: HashAddress, out: &mut [u16]) {
        debug_assert_eq!(out.len(), self.d);
        let k = self.k as u64;
        let mut rest = h;
        for slot in out.iter_mut().rev() {
            *slot = (rest % k) as u16;
            rest /= k;
        }
    }

    pub fn unhash(&self, h: HashAddress) -> Result<QuantVector> {
        if h >= self.address_space() {
            return invalid(format!("address {h} outside [0, {})", self.address_space()));
        }
        let mut q = vec![0u16; self.d];
        self.unhash_into(h, &mut q);
        Ok(QuantVector(q))
    }

    /// Sum over dimensions of the distance to the nearest center.
    pub fn quantization_error(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v.len())?;
        Ok(self.quantization_error_unchecked(v.iter().copied()))
    }

    pub(crate) fn quantization_error_unchecked(&self, v: impl Iterator<Item = f64>) -> f64 {
        v.enumerate()
            .map(|(j, x)| (x - self.center(j, self.nearest(j, x))).abs())
            .sum()
    }

    pub fn header(&self) -> QuantizerHeader {
        QuantizerHeader { k: self.k, d: self.d }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.centers.iter().flat_map(|c| c.to_le_bytes()).collect()
    }

    pub fn from_bytes(header: &QuantizerHeader, bytes: &[u8]) -> Result<Self> {
        let expected = 8 * header.k * header.d;
        if bytes.len() != expected {
            return format_err(
                bytes.len().min(expected) as u64,
                format!("quantizer payload is {} bytes, expected {expected}", bytes.len()),
            );
        }
        let centers = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_centers(header.k, header.d, centers)
    }

    /// Writes `<dir>/quantizer.bin` and `<dir>/quantizer.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::write(dir.join("quantizer.bin"), self.to_bytes())?;
        fs::write(dir.join("quantizer.json"), serde_json::to_string_pretty(&self.header())?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header: QuantizerHeader = serde_json::from_slice(&fs::read(dir.join("quantizer.json"))?)?;
        Self::from_bytes(&header, &fs::read(dir.join("quantizer.bin"))?)
    }

    /// Stable identity of the centers, used to tie an index to its quantizer.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        h.update(self.to_bytes());
        h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Lloyd iterations on sorted values. Segment boundaries are found by binary
/// search and segment means come from prefix sums, so each pass is O(K log N).
fn kmeans_1d(sorted: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = sorted.len();
    let mut distinct: Vec<f64> = sorted.to_vec();
    distinct.dedup();
    if distinct.len() < k {
        return degenerate(format!(
            "only {} distinct value(s), cannot place K={k} centers",
            distinct.len()
        ));
    }

    if k == 2 {
        return Ok(split_two(sorted).to_vec());
    }

    let mut centers: Vec<f64> = (0..k)
        .map(|c| sorted[(((c as f64 + 0.5) * n as f64 / k as f64) as usize).min(n - 1)])
        .collect();
    if centers.windows(2).any(|w| w[0] >= w[1]) {
        // Heavy ties collapse quantiles; spread over distinct values instead.
        let m = distinct.len();
        centers = (0..k)
            .map(|c| distinct[(((c as f64 + 0.5) * m as f64 / k as f64) as usize).min(m - 1)])
            .collect();
    }

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0f64);
    for &v in sorted {
        prefix.push(prefix.last().unwrap() + v);
    }

    for _ in 0..MAX_ITERATIONS {
        let mut start = 0usize;
        let mut moved = 0.0f64;
        let mut next = centers.clone();
        for c in 0..k {
            let end = if c + 1 == k {
                n
            } else {
                let b = 0.5 * (centers[c] + centers[c + 1]);
                sorted.partition_point(|&v| v <= b)
            };
            if end > start {
                next[c] = (prefix[end] - prefix[start]) / (end - start) as f64;
            }
            moved = moved.max((next[c] - centers[c]).abs());
            start = end.max(start);
        }
        centers = next;
        if moved < CONVERGENCE {
            break;
        }
    }
    if centers.windows(2).any(|w| w[0] >= w[1]) {
        return degenerate(format!("K-means collapsed to fewer than K={k} distinct centers"));
    }
    Ok(centers)
}

/// Global optimum for K = 2: the best cut of the sorted values maximises the
/// between-cluster term `n_l * n_r / n * (m_l - m_r)^2`. Only cuts between
/// distinct values are considered; the first best cut wins.
fn split_two(sorted: &[f64]) -> [f64; 2] {
    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    let mut left = 0.0;
    let mut best = (f64::NEG_INFINITY, [sorted[0], sorted[n - 1]]);
    for cut in 1..n {
        left += sorted[cut - 1];
        if sorted[cut - 1] == sorted[cut] {
            continue;
        }
        let (nl, nr) = (cut as f64, (n - cut) as f64);
        let (ml, mr) = (left / nl, (total - left) / nr);
        let gain = nl * nr / n as f64 * (mr - ml) * (mr - ml);
        if gain > best.0 {
            best = (gain, [ml, mr]);
        }
    }
    best.1
}
