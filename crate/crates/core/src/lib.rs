//! Place recognition with deliberately coarse scalar-quantization hashing.
//!
//! Reference descriptors are PCA-projected to a handful of dimensions,
//! quantized per dimension into `K` bins and stored in an inverted index keyed
//! by the resulting base-K address. Short codes mean long, overloaded buckets;
//! the collisions are resolved by matching whole query sequences against the
//! candidates under a constant-velocity assumption.
//!
//! Module map:
//!
//! * [`dataset`]: synthetic reference/query construction
//! * [`transform`]: incremental PCA
//! * [`quantizer`]: per-dimension K-means and hash addresses
//! * [`hashindex`]: inverted index with nearest-occupied fallback
//! * [`seqmatch`]: batch and online sequence matching
//! * [`baseline`]: storage-matched linear scan
//! * [`system`]: both systems behind the [`system::Localizer`] trait
//! * [`eval`], [`bench`]: recall, storage and compute accounting

pub mod baseline;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hashindex;
pub mod matrix;
pub mod pipeline;
pub mod quantizer;
pub mod rng;
pub mod seqmatch;
pub mod system;
pub mod transform;

pub use error::{Error, Result};
pub use matrix::DescriptorMatrix;
