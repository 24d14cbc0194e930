//! Training and persistence of the full reference model: PCA projection,
//! per-dimension quantizer and inverted index.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::hashindex::InvertedIndex;
use crate::matrix::DescriptorMatrix;
use crate::quantizer::{check_address_space, QuantVector, Quantizer};
use crate::transform::{default_batch, fit_incremental, PcaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub d: usize,
    pub k: usize,
    /// Incremental PCA batch; `None` picks `max(1024, 4d)`.
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub pca: PcaModel,
    pub quantizer: Quantizer,
    pub index: InvertedIndex,
}

pub fn train(refs: &DescriptorMatrix, cfg: TrainConfig) -> Result<TrainedModel> {
    check_address_space(cfg.k, cfg.d)?;
    let batch = cfg.batch.unwrap_or_else(|| default_batch(cfg.d));
    let pca = fit_incremental(refs, cfg.d, batch)?;
    let projected = pca.project(refs)?;
    let quantizer = Quantizer::fit(&projected, cfg.k)?;
    let index = InvertedIndex::build(&projected, &quantizer)?;
    Ok(TrainedModel {
        pca,
        quantizer,
        index,
    })
}

impl TrainedModel {
    /// Projects and quantizes every row of `queries`.
    pub fn encode(&self, queries: &DescriptorMatrix) -> Result<Vec<QuantVector>> {
        if queries.dims() != self.pca.input_dims() {
            return invalid(format!(
                "queries are {}-dim, model expects {}",
                queries.dims(),
                self.pca.input_dims()
            ));
        }
        let mut buf = vec![0.0f64; self.pca.output_dims()];
        queries
            .iter_rows()
            .map(|row| {
                self.pca.project_row(row, &mut buf);
                self.quantizer.quantize(&buf)
            })
            .collect()
    }

    /// Writes `pca.*`, `quantizer.*` and `index.chx` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.pca.save(dir)?;
        self.quantizer.save(dir)?;
        self.index.save(dir)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let pca = PcaModel::load(dir)?;
        let quantizer = Quantizer::load(dir)?;
        let index = InvertedIndex::load(dir)?;
        if index.quantizer_id() != quantizer.fingerprint() || pca.output_dims() != quantizer.d() {
            return invalid(format!("{} holds mismatched model parts", dir.display()));
        }
        Ok(Self {
            pca,
            quantizer,
            index,
        })
    }
}

/// Which query windows to evaluate: one centered at every `stride`-th row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryPlan {
    pub l: usize,
    pub stride: usize,
}

impl QueryPlan {
    pub fn new(l: usize, stride: usize) -> Result<Self> {
        if l == 0 || stride == 0 {
            return invalid("sequence length and stride must be >= 1");
        }
        Ok(Self { l, stride })
    }

    pub fn centers(&self, query_rows: usize) -> impl Iterator<Item = usize> {
        (0..query_rows).step_by(self.stride)
    }

    /// Query rows of the window centered at `center`, clamped to the query set.
    pub fn window_rows(&self, center: usize, query_rows: usize) -> impl Iterator<Item = usize> {
        let half = (self.l / 2) as i64;
        let last = query_rows as i64 - 1;
        (0..self.l as i64).map(move |k| (center as i64 + k - half).clamp(0, last) as usize)
    }
}

/// Query row to reference row mapping for concatenated datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    query_boundary: Option<usize>,
    reference_boundary: Option<usize>,
}

impl GroundTruth {
    pub fn new(reference: &DescriptorMatrix, query: &DescriptorMatrix) -> Self {
        Self {
            query_boundary: query.boundary_index,
            reference_boundary: reference.boundary_index,
        }
    }

    pub fn identity() -> Self {
        Self {
            query_boundary: None,
            reference_boundary: None,
        }
    }

    pub fn of(&self, query_row: usize) -> usize {
        match (self.query_boundary, self.reference_boundary) {
            (Some(qb), Some(rb)) if query_row >= qb => rb + (query_row - qb),
            _ => query_row,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_centers_and_windows() {
        let plan = QueryPlan::new(4, 100).unwrap();
        assert_eq!(plan.centers(30).collect::<Vec<_>>(), vec![0]);
        assert_eq!(plan.window_rows(0, 30).collect::<Vec<_>>(), vec![0, 0, 0, 1]);
        assert_eq!(plan.window_rows(29, 30).collect::<Vec<_>>(), vec![27, 28, 29, 29]);
        assert!(QueryPlan::new(0, 1).is_err());
    }

    #[test]
    fn truth_across_boundary() {
        let mut r = DescriptorMatrix::from_rows(&[[0.0f32]; 6], "r").unwrap();
        let mut q = DescriptorMatrix::from_rows(&[[0.0f32]; 5], "q").unwrap();
        r.boundary_index = Some(3);
        q.boundary_index = Some(3);
        let gt = GroundTruth::new(&r, &q);
        assert_eq!((gt.of(2), gt.of(3), gt.of(4)), (2, 3, 4));
        q.boundary_index = Some(2);
        assert_eq!(GroundTruth::new(&r, &q).of(2), 3);
    }

    #[test]
    fn rejects_oversized_address_space() {
        let refs = DescriptorMatrix::from_rows(&[[0.0f32, 1.0], [1.0, 0.0], [2.0, 2.0]], "r").unwrap();
        let err = train(&refs, TrainConfig { d: 64, k: 4, batch: None }).unwrap_err();
        assert!(matches!(err, crate::Error::InvalidArgument(_)));
    }
}
