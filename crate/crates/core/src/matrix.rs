//! Dense row-major descriptor storage and its on-disk form.
//!
//! A matrix is persisted as two files sharing a stem: `<stem>.desc` holds the
//! raw little-endian `f32` values row by row, `<stem>.json` holds the header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{format_err, invalid, Result};

/// One descriptor per row, `rows x dims`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
    pub source_tag: String,
    /// First row of the second part when the matrix is a concatenation.
    pub boundary_index: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorHeader {
    pub rows: usize,
    pub dims: usize,
    pub source_tag: String,
    pub boundary_index: Option<usize>,
    pub seed: Option<u64>,
}

impl DescriptorMatrix {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>, source_tag: impl Into<String>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return invalid(format!("descriptor matrix must be non-empty, got {rows}x{dims}"));
        }
        if data.len() != rows * dims {
            return invalid(format!(
                "descriptor matrix {rows}x{dims} needs {} values, got {}",
                rows * dims,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite value at row {}, column {}",
                pos / dims,
                pos % dims
            ));
        }
        Ok(Self {
            rows,
            dims,
            data,
            source_tag: source_tag.into(),
            boundary_index: None,
            seed: None,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], source_tag: impl Into<String>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("descriptor matrix must have at least one row");
        };
        let dims = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dims);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dims {
                return invalid(format!("row {i} has {} dims, expected {dims}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dims, data, source_tag)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Rows `start..end` as a new matrix with the same tag.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.rows {
            return invalid(format!("row range {start}..{end} invalid for {} rows", self.rows));
        }
        Self::new(
            end - start,
            self.dims,
            self.data[start * self.dims..end * self.dims].to_vec(),
            self.source_tag.clone(),
        )
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.dims];
        for r in self.iter_rows() {
            for (s, &v) in sums.iter_mut().zip(r) {
                *s += v as f64;
            }
        }
        let n = self.rows as f64;
        sums.iter_mut().for_each(|s| *s /= n);
        sums
    }

    /// Population (divide-by-N) standard deviation of each column.
    pub fn column_stds(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut acc = vec![0.0f64; self.dims];
        for r in self.iter_rows() {
            for ((a, &v), m) in acc.iter_mut().zip(r).zip(&means) {
                let d = v as f64 - m;
                *a += d * d;
            }
        }
        let n = self.rows as f64;
        acc.into_iter().map(|a| (a / n).sqrt()).collect()
    }

    pub fn header(&self) -> DescriptorHeader {
        DescriptorHeader {
            rows: self.rows,
            dims: self.dims,
            source_tag: self.source_tag.clone(),
            boundary_index: self.boundary_index,
            seed: self.seed,
        }
    }

    /// Writes `<stem>.desc` and `<stem>.json`.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let (desc, json) = file_pair(stem.as_ref());
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&desc, bytes)?;
        fs::write(&json, serde_json::to_string_pretty(&self.header())?)?;
        Ok(())
    }

    /// Reads a matrix given its stem or either of its two file paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (desc, json) = file_pair(path.as_ref());
        let header: DescriptorHeader = serde_json::from_slice(&fs::read(&json)?)?;
        let bytes = fs::read(&desc)?;
        let expected = header.rows as u64 * header.dims as u64 * 4;
        if (bytes.len() as u64) != expected {
            return format_err(
                (bytes.len() as u64).min(expected),
                format!(
                    "{} holds {} bytes, header promises {expected}",
                    desc.display(),
                    bytes.len()
                ),
            );
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return format_err(pos as u64 * 4, "non-finite descriptor value");
        }
        let mut m = Self::new(header.rows, header.dims, data, header.source_tag)?;
        m.boundary_index = header.boundary_index;
        m.seed = header.seed;
        Ok(m)
    }
}

fn file_pair(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("desc") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut desc = stem.clone().into_os_string();
    desc.push(".desc");
    let mut json = stem.into_os_string();
    json.push(".json");
    (desc.into(), json.into())
}
