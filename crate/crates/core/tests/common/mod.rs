//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use coarsehash::hashindex::InvertedIndex;
use coarsehash::quantizer::{QuantVector, Quantizer};

/// Cyclic Jacobi eigen-solver for a dense symmetric matrix. Returns
/// `(eigenvalues, eigenvectors as rows)` sorted by decreasing eigenvalue.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b * n + b].total_cmp(&m[a * n + a]));
    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
        .collect();
    (values, vectors)
}

/// Population covariance of row-major f32 data.
pub fn covariance(data: &[f32], rows: usize, dims: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dims];
    for r in data.chunks(dims) {
        for j in 0..dims {
            mean[j] += r[j] as f64 / rows as f64;
        }
    }
    let mut cov = vec![0.0; dims * dims];
    for r in data.chunks(dims) {
        for i in 0..dims {
            for j in 0..dims {
                cov[i * dims + j] += (r[i] as f64 - mean[i]) * (r[j] as f64 - mean[j]) / rows as f64;
            }
        }
    }
    (mean, cov)
}

/// Globally optimal 2-means on a line: scan every split of the sorted values.
pub fn best_split_2means(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let sse = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        (m, s.iter().map(|x| (x - m) * (x - m)).sum::<f64>())
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for cut in 1..v.len() {
        let (ml, sl) = sse(&v[..cut]);
        let (mr, sr) = sse(&v[cut..]);
        if sl + sr < best.0 {
            best = (sl + sr, ml, mr);
        }
    }
    (best.1, best.2)
}

/// Per-dimension argmin over all centers; first minimum wins.
pub fn brute_quantize(qz: &Quantizer, v: &[f64]) -> Vec<u16> {
    v.iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut best = (f64::INFINITY, 0u16);
            for (c, &center) in qz.centers(j).iter().enumerate() {
                let e = (x - center).abs();
                if e < best.0 {
                    best = (e, c as u16);
                }
            }
            best.1
        })
        .collect()
}

/// Base-K positional value of a digit vector, first digit most significant.
pub fn positional(q: &[u16], k: u64) -> u64 {
    q.iter().fold(0u64, |h, &x| h * k + x as u64)
}

/// Buckets by grouping reference addresses.
pub fn group_by(addresses: &[u64]) -> BTreeMap<u64, Vec<u32>> {
    let mut map: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for (i, &a) in addresses.iter().enumerate() {
        map.entry(a).or_default().push(i as u32);
    }
    map
}

/// Numerically nearest occupied address by linear scan; lower on ties.
pub fn nearest_linear(occupied: &[u64], h: u64) -> u64 {
    let mut best = occupied[0];
    for &a in occupied {
        if a.abs_diff(h) < best.abs_diff(h) || (a.abs_diff(h) == best.abs_diff(h) && a < best) {
            best = a;
        }
    }
    best
}

/// Direct sequence scorer over an explicit candidate set, computing each
/// frame distance from the centers with no lookup table.
pub fn naive_sequence(
    index: &InvertedIndex,
    qz: &Quantizer,
    window: &[QuantVector],
    candidates: &[u32],
) -> (usize, f64) {
    let n = index.ref_count() as i64;
    let half = (window.len() / 2) as i64;
    let mut best = (usize::MAX, f64::INFINITY);
    for &i in candidates {
        let mut score = 0.0;
        for (k, q) in window.iter().enumerate() {
            let r = (i as i64 + k as i64 - half).clamp(0, n - 1) as usize;
            let refq = qz.unhash(index.address_of(r)).unwrap();
            let mut dist = 0.0;
            for j in 0..qz.d() {
                dist += (qz.center(j, refq.0[j]) - qz.center(j, q.0[j])).abs();
            }
            score += dist;
        }
        if score < best.1 {
            best = (i as usize, score);
        }
    }
    best
}

/// Union of the window's resolved buckets, ascending and deduplicated.
pub fn window_candidates(index: &InvertedIndex, qz: &Quantizer, window: &[QuantVector]) -> Vec<u32> {
    let mut c: Vec<u32> = Vec::new();
    for q in window {
        let h = qz.hash(q).unwrap();
        let resolved = nearest_linear(index.occupied(), h);
        c.extend_from_slice(index.bucket(resolved).unwrap());
    }
    c.sort_unstable();
    c.dedup();
    c
}

/// Sample autocorrelation of a series at `lag`.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let cov: f64 = (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum();
    cov / var
}
