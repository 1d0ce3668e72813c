//! Readout-subspace alignment analysis for layer hidden states.
//!
//! The central measurement asks whether the pairwise cosine-distance structure
//! of a layer's states survives projection onto the top-k right singular
//! directions of the readout matrix better than it survives projection onto
//! random k-dimensional subspaces, reported as a z-score against that random
//! null. Around it sit anisotropy correction, spectral shape metrics,
//! bright/dark mechanism diagnostics, permutation and bootstrap statistics,
//! cross-model RSA, synthetic ground-truth generators and a reporting
//! pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod mechanism;
pub mod pga;
pub mod pipeline;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod store;

pub use error::{PgaError, Result};
