//! Incremental PCA.
//!
//! The model is trained by streaming mini-batches into an exact running mean
//! and scatter matrix (pairwise merge of batch statistics); the eigenbasis is
//! re-derived from the merged scatter whenever a model is requested, so a
//! partially trained model is always available and orthonormal.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, format_err, invalid, Result};
use crate::matrix::DescriptorMatrix;

/// Eigenvalues at or below this fraction of the largest one count as zero.
const RANK_TOLERANCE: f64 = 1e-9;

pub fn default_batch(d: usize) -> usize {
    usize::max(1024, 4 * d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dims: usize,
    mean: Vec<f64>,
    /// `d x D`, row-major, rows orthonormal and ordered by decreasing variance.
    components: Vec<f64>,
    variances: Vec<f64>,
    trained_on: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PcaHeader {
    #[serde(rename = "D")]
    pub input_dims: usize,
    pub d: usize,
    pub trained_on: usize,
}

/// Streaming accumulator of first and second moments.
#[derive(Debug, Clone)]
pub struct IncrementalPca {
    dims: usize,
    seen: usize,
    mean: Vec<f64>,
    scatter: Vec<f64>,
}

impl IncrementalPca {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            seen: 0,
            mean: vec![0.0; dims],
            scatter: vec![0.0; dims * dims],
        }
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Merges one batch of row-major rows into the running statistics.
    pub fn partial_fit(&mut self, batch: &[f32]) -> Result<()> {
        let dims = self.dims;
        if batch.is_empty() || !batch.len().is_multiple_of(dims) {
            return invalid(format!("batch of {} values is not a multiple of {dims}", batch.len()));
        }
        let n_b = batch.len() / dims;

        let mut mean_b = vec![0.0f64; dims];
        for row in batch.chunks_exact(dims) {
            for (m, &v) in mean_b.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean_b.iter_mut().for_each(|m| *m /= n_b as f64);

        // Upper triangle of the batch scatter, mirrored below.
        let mut scatter_b = vec![0.0f64; dims * dims];
        let mut centered = vec![0.0f64; dims];
        for row in batch.chunks_exact(dims) {
            for ((c, &v), m) in centered.iter_mut().zip(row).zip(&mean_b) {
                *c = v as f64 - m;
            }
            for i in 0..dims {
                let ci = centered[i];
                let dst = &mut scatter_b[i * dims + i..(i + 1) * dims];
                for (s, &cj) in dst.iter_mut().zip(&centered[i..]) {
                    *s += ci * cj;
                }
            }
        }

        let n_a = self.seen as f64;
        let n_bf = n_b as f64;
        let n = n_a + n_bf;
        let delta: Vec<f64> = mean_b.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let w = n_a * n_bf / n;
        for i in 0..dims {
            for j in i..dims {
                let v = self.scatter[i * dims + j] + scatter_b[i * dims + j] + delta[i] * delta[j] * w;
                self.scatter[i * dims + j] = v;
                self.scatter[j * dims + i] = v;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * n_bf / n;
        }
        self.seen += n_b;
        Ok(())
    }

    /// Current model with `d` retained components.
    pub fn model(&self, d: usize) -> Result<PcaModel> {
        let dims = self.dims;
        if d == 0 || d > dims {
            return invalid(format!("retained components d={d} must be in 1..={dims}"));
        }
        if self.seen < 2 {
            return degenerate(format!("PCA needs at least 2 rows, saw {}", self.seen));
        }
        let cov = DMatrix::from_fn(dims, dims, |i, j| self.scatter[i * dims + j] / self.seen as f64);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dims).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let top = eig.eigenvalues[order[0]].max(0.0);
        let rank = order
            .iter()
            .filter(|&&k| eig.eigenvalues[k] > top * RANK_TOLERANCE && eig.eigenvalues[k] > 0.0)
            .count();
        if rank < d {
            return degenerate(format!(
                "data supports only {rank} principal component(s), {d} requested (achievable rank {rank})"
            ));
        }

        let mut components = Vec::with_capacity(d * dims);
        let mut variances = Vec::with_capacity(d);
        for &k in &order[..d] {
            let col = eig.eigenvectors.column(k);
            let mut v: Vec<f64> = col.iter().copied().collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            fix_sign(&mut v);
            components.extend_from_slice(&v);
            variances.push(eig.eigenvalues[k]);
        }
        Ok(PcaModel {
            input_dims: dims,
            mean: self.mean.clone(),
            components,
            variances,
            trained_on: self.seen,
        })
    }
}

/// Largest-magnitude entry made positive (first one wins on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits a `d`-component PCA by streaming `data` in batches of `batch` rows.
pub fn fit_incremental(data: &DescriptorMatrix, d: usize, batch: usize) -> Result<PcaModel> {
    let dims = data.dims();
    if d == 0 || d > dims {
        return invalid(format!("retained components d={d} must be in 1..={dims}"));
    }
    if batch < d {
        return invalid(format!("batch size {batch} smaller than d={d}"));
    }
    let mut ipca = IncrementalPca::new(dims);
    for chunk in data.as_slice().chunks(batch * dims) {
        ipca.partial_fit(chunk)?;
    }
    ipca.model(d)
}

impl PcaModel {
    /// Builds a model from explicit parts; component rows must be orthonormal.
    pub fn from_parts(
        mean: Vec<f64>,
        components: Vec<f64>,
        variances: Vec<f64>,
        trained_on: usize,
    ) -> Result<Self> {
        let input_dims = mean.len();
        let d = variances.len();
        if input_dims == 0 || d == 0 || components.len() != d * input_dims {
            return invalid(format!(
                "PCA parts inconsistent: mean {input_dims}, variances {d}, components {}",
                components.len()
            ));
        }
        for a in 0..d {
            for b in a..d {
                let dot: f64 = components[a * input_dims..(a + 1) * input_dims]
                    .iter()
                    .zip(&components[b * input_dims..(b + 1) * input_dims])
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-5 {
                    return invalid(format!("component rows {a} and {b} not orthonormal (dot {dot})"));
                }
            }
        }
        Ok(Self {
            input_dims,
            mean,
            components,
            variances,
            trained_on,
        })
    }

    pub fn input_dims(&self) -> usize {
        self.input_dims
    }

    pub fn output_dims(&self) -> usize {
        self.variances.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.input_dims..(k + 1) * self.input_dims]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn trained_on(&self) -> usize {
        self.trained_on
    }

    /// The same model keeping only the leading `d` components.
    pub fn truncated(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.output_dims() {
            return invalid(format!("cannot keep {d} of {} components", self.output_dims()));
        }
        Ok(Self {
            input_dims: self.input_dims,
            mean: self.mean.clone(),
            components: self.components[..d * self.input_dims].to_vec(),
            variances: self.variances[..d].to_vec(),
            trained_on: self.trained_on,
        })
    }

    pub fn project_row(&self, row: &[f32], out: &mut [f64]) {
        debug_assert_eq!(row.len(), self.input_dims);
        let mut centered = vec![0.0f64; self.input_dims];
        for ((c, &v), m) in centered.iter_mut().zip(row).zip(&self.mean) {
            *c = v as f64 - m;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = self
                .component(k)
                .iter()
                .zip(&centered)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    pub fn project(&self, m: &DescriptorMatrix) -> Result<DescriptorMatrix> {
        if m.dims() != self.input_dims {
            return invalid(format!(
                "PCA expects {}-dim rows, matrix has {}",
                self.input_dims,
                m.dims()
            ));
        }
        let d = self.output_dims();
        let mut out = Vec::with_capacity(m.rows() * d);
        let mut buf = vec![0.0f64; d];
        for row in m.iter_rows() {
            self.project_row(row, &mut buf);
            out.extend(buf.iter().map(|&v| v as f32));
        }
        let mut p = DescriptorMatrix::new(m.rows(), d, out, m.source_tag.clone())?;
        p.boundary_index = m.boundary_index;
        p.seed = m.seed;
        Ok(p)
    }

    /// `mean + components^T * projected`.
    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, &p) in projected.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(self.component(k)) {
                *o += c * p;
            }
        }
        out
    }

    pub fn header(&self) -> PcaHeader {
        PcaHeader {
            input_dims: self.input_dims,
            d: self.output_dims(),
            trained_on: self.trained_on,
        }
    }

    /// Little-endian f64: mean (D), components (d x D), variances (d).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.mean
            .iter()
            .chain(&self.components)
            .chain(&self.variances)
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    pub fn from_bytes(header: &PcaHeader, bytes: &[u8]) -> Result<Self> {
        let (dd, d) = (header.input_dims, header.d);
        let expected = 8 * (dd + d * dd + d);
        if bytes.len() != expected {
            return format_err(
                bytes.len().min(expected) as u64,
                format!("PCA payload is {} bytes, expected {expected}", bytes.len()),
            );
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_parts(
            vals[..dd].to_vec(),
            vals[dd..dd + d * dd].to_vec(),
            vals[dd + d * dd..].to_vec(),
            header.trained_on,
        )
    }

    /// Writes `<dir>/pca.bin` and `<dir>/pca.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::write(dir.join("pca.bin"), self.to_bytes())?;
        fs::write(dir.join("pca.json"), serde_json::to_string_pretty(&self.header())?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header: PcaHeader = serde_json::from_slice(&fs::read(dir.join("pca.json"))?)?;
        Self::from_bytes(&header, &fs::read(dir.join("pca.bin"))?)
    }
}
