//! Synthetic localization datasets.
//!
//! Two sources are combined the same way a real benchmark would be built from
//! an unordered descriptor pool and a driven traverse:
//!
//! * part A: i.i.d. Gaussian pool, made locally similar with a sliding-window
//!   average, PCA-decorrelated and rescaled to the traverse's per-component
//!   spread. Its queries are the same rows plus noise drawn from a model fitted
//!   on the traverse's reference/query pairs.
//! * part B: a smooth random-walk traverse with paired queries.
//!
//! Reference = A then B, query = noisy A then B queries. Query row `t` matches
//! reference row `t` in both parts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Result};
use crate::matrix::DescriptorMatrix;
use crate::rng;
use crate::transform::{default_batch, fit_incremental};

/// Lag-one correlation of the traverse random walk.
pub const TRAVERSE_SMOOTHNESS: f64 = 0.97;
/// Query perturbation amplitude relative to each dimension's spread.
pub const QUERY_PERTURBATION: f64 = 0.5;
/// Lag-one correlation of the query perturbation along the traverse.
pub const PERTURBATION_SMOOTHNESS: f64 = 0.3;

/// Per-dimension spread of the raw traverse: steep decay.
fn traverse_scale(j: usize) -> f64 {
    (-(j as f64) / 12.0).exp() + 0.05
}

/// Per-dimension spread of the raw pool: shallow decay.
fn pool_scale(j: usize, dims: usize) -> f64 {
    1.0 / (1.0 + 2.0 * j as f64 / dims as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecipe {
    /// Rows of the unordered pool (part A).
    pub ref_count_a: usize,
    /// Reference rows of the traverse (part B).
    pub ref_count_b: usize,
    /// Query rows of the traverse; must not exceed `ref_count_b`.
    pub query_count_b: usize,
    /// Sliding-window width used to homogenize part A.
    pub window_w: usize,
    /// Multiplier on the fitted noise standard deviation.
    pub noise_scale: f64,
    pub seed: u64,
    pub target_dims: usize,
}

impl DatasetRecipe {
    /// 20K layout: 10,000 pool rows and 10,000 traverse rows.
    pub fn twenty_k(seed: u64) -> Self {
        Self {
            ref_count_a: 10_000,
            ref_count_b: 10_000,
            query_count_b: 10_000,
            window_w: 40,
            noise_scale: 1.0,
            seed,
            target_dims: 96,
        }
    }

    /// 1M layout: one million pool rows plus the full traverse.
    pub fn one_m(seed: u64) -> Self {
        Self {
            ref_count_a: 1_000_000,
            ref_count_b: 47_781,
            query_count_b: 26_638,
            window_w: 40,
            noise_scale: 1.0,
            seed,
            target_dims: 96,
        }
    }

    pub fn total_references(&self) -> usize {
        self.ref_count_a + self.ref_count_b
    }

    pub fn total_queries(&self) -> usize {
        self.ref_count_a + self.query_count_b
    }

    pub fn validate(&self) -> Result<()> {
        if self.ref_count_a == 0 || self.ref_count_b == 0 || self.query_count_b == 0 {
            return invalid("ref_count_a, ref_count_b and query_count_b must all be >= 1");
        }
        if self.query_count_b > self.ref_count_b {
            return invalid(format!(
                "query_count_b ({}) exceeds ref_count_b ({})",
                self.query_count_b, self.ref_count_b
            ));
        }
        if self.window_w == 0 || self.window_w > self.ref_count_a {
            return invalid(format!("window_w must be in 1..={}", self.ref_count_a));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return invalid("noise_scale must be positive");
        }
        if self.target_dims == 0 {
            return invalid("target_dims must be >= 1");
        }
        if self.target_dims >= self.ref_count_a.min(self.ref_count_b) {
            return invalid("target_dims must be smaller than both reference parts");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub scale: f64,
}

/// Smooth random walk with a paired, perturbed query for every place.
pub fn generate_traverse(
    count: usize,
    dims: usize,
    smoothness: f64,
    seed: u64,
) -> Result<(DescriptorMatrix, DescriptorMatrix)> {
    if count == 0 || dims == 0 {
        return invalid(format!("traverse needs count and dims >= 1, got {count}x{dims}"));
    }
    if !(0.0..1.0).contains(&smoothness) {
        return invalid(format!("smoothness {smoothness} must be in [0, 1)"));
    }
    let mut walk = rng::stream(seed, rng::STREAM_TRAVERSE);
    let mut pert = rng::stream(seed, rng::STREAM_QUERY_PERTURBATION);
    let innov = (1.0 - smoothness * smoothness).sqrt();
    let p_innov = (1.0 - PERTURBATION_SMOOTHNESS * PERTURBATION_SMOOTHNESS).sqrt();
    let scales: Vec<f64> = (0..dims).map(traverse_scale).collect();

    let mut state: Vec<f64> = (0..dims).map(|_| walk.sample(StandardNormal)).collect();
    let mut p_state: Vec<f64> = (0..dims).map(|_| pert.sample(StandardNormal)).collect();
    let mut reference = Vec::with_capacity(count * dims);
    let mut query = Vec::with_capacity(count * dims);
    for i in 0..count {
        for j in 0..dims {
            if i > 0 {
                let e: f64 = walk.sample(StandardNormal);
                state[j] = smoothness * state[j] + innov * e;
                let e: f64 = pert.sample(StandardNormal);
                p_state[j] = PERTURBATION_SMOOTHNESS * p_state[j] + p_innov * e;
            }
            let r = scales[j] * state[j];
            reference.push(r as f32);
            query.push((r + QUERY_PERTURBATION * scales[j] * p_state[j]) as f32);
        }
    }
    let mut r = DescriptorMatrix::new(count, dims, reference, "synthB")?;
    let mut q = DescriptorMatrix::new(count, dims, query, "synthB-query")?;
    r.seed = Some(seed);
    q.seed = Some(seed);
    Ok((r, q))
}

/// Unordered i.i.d. Gaussian pool with a shallow spread profile.
pub fn generate_pool(count: usize, dims: usize, seed: u64) -> Result<DescriptorMatrix> {
    if count == 0 || dims == 0 {
        return invalid(format!("pool needs count and dims >= 1, got {count}x{dims}"));
    }
    let mut rng = rng::stream(seed, rng::STREAM_POOL);
    let scales: Vec<f64> = (0..dims).map(|j| pool_scale(j, dims)).collect();
    let mut data = Vec::with_capacity(count * dims);
    for _ in 0..count {
        for s in &scales {
            let e: f64 = rng.sample(StandardNormal);
            data.push((s * e) as f32);
        }
    }
    let mut m = DescriptorMatrix::new(count, dims, data, "synthA")?;
    m.seed = Some(seed);
    Ok(m)
}

/// Sliding-window mean over rows. The window covers offsets
/// `-floor(w/2) ..= ceil(w/2) - 1` around each row; indices past either end
/// are clamped to the first/last row.
pub fn homogenize(m: &DescriptorMatrix, w: usize) -> Result<DescriptorMatrix> {
    let (n, dims) = (m.rows(), m.dims());
    if w == 0 || w > n {
        return invalid(format!("window {w} must be in 1..={n}"));
    }
    if w == 1 {
        return Ok(m.clone());
    }
    // prefix[(i) * dims + j] = sum of rows < i in column j
    let mut prefix = vec![0.0f64; (n + 1) * dims];
    for i in 0..n {
        let row = m.row(i);
        for j in 0..dims {
            prefix[(i + 1) * dims + j] = prefix[i * dims + j] + row[j] as f64;
        }
    }
    let back = (w / 2) as isize;
    let fwd = (w - w / 2) as isize - 1;
    let last = n as isize - 1;
    let mut out = Vec::with_capacity(n * dims);
    for i in 0..n as isize {
        let lo = i - back;
        let hi = i + fwd;
        let below = (-lo).max(0) as f64;
        let above = (hi - last).max(0) as f64;
        let (a, b) = (lo.max(0) as usize, hi.min(last) as usize + 1);
        for j in 0..dims {
            let s = prefix[b * dims + j] - prefix[a * dims + j]
                + below * m.row(0)[j] as f64
                + above * m.row(n - 1)[j] as f64;
            out.push((s / w as f64) as f32);
        }
    }
    let mut h = DescriptorMatrix::new(n, dims, out, m.source_tag.clone())?;
    h.seed = m.seed;
    h.boundary_index = m.boundary_index;
    Ok(h)
}

/// Rescales each column around its mean so its population std equals `target_std`.
pub fn rescale_variance(src: &DescriptorMatrix, target_std: &[f64]) -> Result<DescriptorMatrix> {
    let dims = src.dims();
    if target_std.len() != dims {
        return invalid(format!("target std has {} entries, matrix has {dims} dims", target_std.len()));
    }
    if let Some(j) = target_std.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
        return invalid(format!("target std for dimension {j} is not a finite non-negative value"));
    }
    let means = src.column_means();
    let stds = src.column_stds();
    if let Some(j) = stds.iter().position(|&s| s <= 0.0) {
        return degenerate(format!("source dimension {j} has zero variance"));
    }
    let factors: Vec<f64> = target_std.iter().zip(&stds).map(|(t, s)| t / s).collect();
    let mut out = Vec::with_capacity(src.rows() * dims);
    for row in src.iter_rows() {
        for j in 0..dims {
            out.push((means[j] + (row[j] as f64 - means[j]) * factors[j]) as f32);
        }
    }
    let mut m = DescriptorMatrix::new(src.rows(), dims, out, src.source_tag.clone())?;
    m.seed = src.seed;
    m.boundary_index = src.boundary_index;
    Ok(m)
}

/// Per-dimension mean and population std of `ref_b - query_b`.
pub fn fit_noise_model(ref_b: &DescriptorMatrix, query_b: &DescriptorMatrix, scale: f64) -> Result<NoiseModel> {
    if ref_b.rows() != query_b.rows() || ref_b.dims() != query_b.dims() {
        return invalid(format!(
            "noise pairs need equal shapes, got {}x{} and {}x{}",
            ref_b.rows(),
            ref_b.dims(),
            query_b.rows(),
            query_b.dims()
        ));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return invalid("noise scale must be positive");
    }
    let dims = ref_b.dims();
    let n = ref_b.rows() as f64;
    let mut mean = vec![0.0f64; dims];
    for (x, y) in ref_b.iter_rows().zip(query_b.iter_rows()) {
        for j in 0..dims {
            mean[j] += x[j] as f64 - y[j] as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; dims];
    for (x, y) in ref_b.iter_rows().zip(query_b.iter_rows()) {
        for j in 0..dims {
            let d = x[j] as f64 - y[j] as f64 - mean[j];
            var[j] += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(NoiseModel { mean, std, scale })
}

/// Adds independent `Normal(mean_j, (scale * std_j)^2)` noise to every entry.
pub fn apply_noise(m: &DescriptorMatrix, nm: &NoiseModel, seed: u64) -> Result<DescriptorMatrix> {
    let dims = m.dims();
    if nm.mean.len() != dims || nm.std.len() != dims {
        return invalid(format!(
            "noise model has {}/{} dims, matrix has {dims}",
            nm.mean.len(),
            nm.std.len()
        ));
    }
    if nm.std.iter().any(|s| *s < 0.0) {
        return invalid("noise std entries must be non-negative");
    }
    let mut rng = rng::stream(seed, rng::STREAM_NOISE);
    let mut out = Vec::with_capacity(m.rows() * dims);
    for row in m.iter_rows() {
        for ((&x, mu), sigma) in row.iter().zip(&nm.mean).zip(&nm.std) {
            let e: f64 = rng.sample(StandardNormal);
            out.push((x as f64 + mu + nm.scale * sigma * e) as f32);
        }
    }
    let mut q = DescriptorMatrix::new(m.rows(), dims, out, m.source_tag.clone())?;
    q.seed = Some(seed);
    q.boundary_index = m.boundary_index;
    Ok(q)
}

/// Rows of `a` followed by rows of `b`; the boundary is `a.rows()`.
pub fn concat(a: &DescriptorMatrix, b: &DescriptorMatrix) -> Result<DescriptorMatrix> {
    if a.dims() != b.dims() {
        return invalid(format!("cannot concatenate {}-dim and {}-dim rows", a.dims(), b.dims()));
    }
    let mut data = Vec::with_capacity((a.rows() + b.rows()) * a.dims());
    data.extend_from_slice(a.as_slice());
    data.extend_from_slice(b.as_slice());
    let tag = format!("{}|{}@{}", a.source_tag, b.source_tag, a.rows());
    let mut m = DescriptorMatrix::new(a.rows() + b.rows(), a.dims(), data, tag)?;
    m.boundary_index = Some(a.rows());
    m.seed = a.seed.or(b.seed);
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct LocalizationDataset {
    pub reference: DescriptorMatrix,
    pub query: DescriptorMatrix,
    pub noise: NoiseModel,
}

/// Reference row matched by query row `t` for matrices produced by [`build`].
pub fn ground_truth(reference: &DescriptorMatrix, query: &DescriptorMatrix, t: usize) -> usize {
    match (query.boundary_index, reference.boundary_index) {
        (Some(qb), Some(rb)) if t >= qb => rb + (t - qb),
        _ => t,
    }
}

/// Builds reference and query sets from a recipe, with variance alignment.
pub fn build(recipe: &DatasetRecipe) -> Result<LocalizationDataset> {
    build_with(recipe, true)
}

/// As [`build`], optionally skipping the part-A variance alignment.
pub fn build_with(recipe: &DatasetRecipe, align_variance: bool) -> Result<LocalizationDataset> {
    recipe.validate()?;
    let dims = recipe.target_dims;
    let batch = default_batch(dims);

    let part_a = {
        let pool = generate_pool(recipe.ref_count_a, dims, recipe.seed)?;
        let smooth = homogenize(&pool, recipe.window_w)?;
        drop(pool);
        fit_incremental(&smooth, dims, batch)?.project(&smooth)?
    };

    let (raw_ref_b, raw_query_b) =
        generate_traverse(recipe.ref_count_b, dims, TRAVERSE_SMOOTHNESS, recipe.seed)?;
    let pca_b = fit_incremental(&raw_ref_b, dims, batch)?;
    let ref_b = pca_b.project(&raw_ref_b)?;
    let query_b = pca_b.project(&raw_query_b.slice_rows(0, recipe.query_count_b)?)?;
    drop((raw_ref_b, raw_query_b));

    let part_a = if align_variance {
        rescale_variance(&part_a, &ref_b.column_stds())?
    } else {
        part_a
    };

    let noise = fit_noise_model(
        &ref_b.slice_rows(0, recipe.query_count_b)?,
        &query_b,
        recipe.noise_scale,
    )?;
    let query_a = apply_noise(&part_a, &noise, recipe.seed)?;

    let mut reference = concat(&part_a, &ref_b)?;
    drop(part_a);
    let mut query = concat(&query_a, &query_b)?;
    reference.seed = Some(recipe.seed);
    query.seed = Some(recipe.seed);
    Ok(LocalizationDataset {
        reference,
        query,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f32]) -> DescriptorMatrix {
        let rows: Vec<[f32; 1]> = values.iter().map(|&v| [v]).collect();
        DescriptorMatrix::from_rows(&rows, "t").unwrap()
    }

    #[test]
    fn traverse_single_place_and_errors() {
        let (r, q) = generate_traverse(1, 4, 0.9, 7).unwrap();
        assert_eq!((r.rows(), r.dims(), q.rows(), q.dims()), (1, 4, 1, 4));
        assert_eq!(ground_truth(&r, &q, 0), 0);
        assert!(generate_traverse(0, 4, 0.9, 7).is_err());
        assert!(generate_traverse(4, 0, 0.9, 7).is_err());
    }

    #[test]
    fn traverse_is_deterministic() {
        let a = generate_traverse(100, 8, 0.9, 7).unwrap();
        let b = generate_traverse(100, 8, 0.9, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, generate_traverse(100, 8, 0.9, 8).unwrap().0);
    }

    #[test]
    fn homogenize_identity_and_mean() {
        let m = col(&[0.0, 2.0, 4.0]);
        assert_eq!(homogenize(&m, 1).unwrap(), m);
        let h = homogenize(&m, 3).unwrap();
        assert_eq!(h.row(1), &[2.0]);
        // clamped edges replicate the boundary rows
        assert!((h.row(0)[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((h.row(2)[0] - 10.0 / 3.0).abs() < 1e-6);
        assert!(homogenize(&m, 4).is_err());
        assert!(homogenize(&m, 0).is_err());
    }

    #[test]
    fn rescale_halves_deviations() {
        let m = col(&[1.0, 3.0, 5.0, 7.0]);
        let std = m.column_stds()[0];
        let out = rescale_variance(&m, &[std / 2.0]).unwrap();
        assert_eq!(out.as_slice(), &[2.5, 3.5, 4.5, 5.5]);
        assert_eq!(rescale_variance(&m, &[std]).unwrap(), m);
        assert!(matches!(
            rescale_variance(&col(&[2.0, 2.0]), &[1.0]),
            Err(crate::Error::Degenerate(_))
        ));
    }

    #[test]
    fn noise_model_statistics() {
        let r = col(&[1.0, 3.0]);
        let q = col(&[0.0, 0.0]);
        let nm = fit_noise_model(&r, &q, 1.0).unwrap();
        assert_eq!(nm.mean, vec![2.0]);
        assert_eq!(nm.std, vec![1.0]);
        let zero = fit_noise_model(&r, &r, 2.0).unwrap();
        assert_eq!((zero.mean.clone(), zero.std.clone(), zero.scale), (vec![0.0], vec![0.0], 2.0));
        assert!(fit_noise_model(&r, &col(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn apply_noise_edge_cases() {
        let m = col(&[1.0, -2.0, 0.5]);
        let none = NoiseModel { mean: vec![0.0], std: vec![0.0], scale: 1.0 };
        assert_eq!(apply_noise(&m, &none, 3).unwrap().as_slice(), m.as_slice());
        let shift = NoiseModel { mean: vec![5.0], std: vec![0.0], scale: 1.0 };
        assert_eq!(apply_noise(&m, &shift, 3).unwrap().as_slice(), &[6.0, 3.0, 5.5]);
        let nm = NoiseModel { mean: vec![0.1], std: vec![1.0], scale: 2.0 };
        assert_eq!(apply_noise(&m, &nm, 9).unwrap(), apply_noise(&m, &nm, 9).unwrap());
        let wide = NoiseModel { mean: vec![0.0; 2], std: vec![1.0; 2], scale: 1.0 };
        assert!(apply_noise(&m, &wide, 1).is_err());
    }

    #[test]
    fn concat_layout() {
        let a = col(&[1.0, 2.0]);
        let b = col(&[3.0, 4.0, 5.0]);
        let c = concat(&a, &b).unwrap();
        assert_eq!(c.rows(), 5);
        assert_eq!(c.boundary_index, Some(2));
        assert_eq!(c.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let one = concat(&col(&[7.0]), &col(&[8.0])).unwrap();
        assert_eq!(one.as_slice(), &[7.0, 8.0]);
        let wide = DescriptorMatrix::from_rows(&[[1.0f32, 2.0]], "w").unwrap();
        assert!(concat(&a, &wide).is_err());
    }

    #[test]
    fn recipe_validation() {
        let mut r = DatasetRecipe::twenty_k(1);
        assert!(r.validate().is_ok());
        assert_eq!(r.total_references(), 20_000);
        r.query_count_b = 10_001;
        assert!(r.validate().is_err());
        let mut r = DatasetRecipe::twenty_k(1);
        r.noise_scale = 0.0;
        assert!(r.validate().is_err());
        let mut r = DatasetRecipe::twenty_k(1);
        r.window_w = 0;
        assert!(r.validate().is_err());
    }
}
