//! Deep multi-view fiber clustering.
//!
//! Tractography streamlines are clustered jointly on their geometry and on
//! the BOLD signals sampled at their endpoints. Each view gets its own
//! edge-convolution encoder, pretrained to regress pairwise pseudo-distances
//! (direct-flip distance for geometry, SRVF-space MSE for signals). The two
//! views are then fine-tuned together against alternating sharpened targets,
//! and inference averages the per-view Student's-t soft assignments.
//!
//! Module map:
//!
//! - [`fiberset`]: dataset model and the FSET v1 directory format
//! - [`geometry`]: resampling, direct-flip distance, α dispersion, QuickBundles
//! - [`functional`]: signal downsampling, PCA, SRVF, functional pseudo-label, Pearson
//! - [`encoder`]: edge-convolution point-cloud encoders with manual backprop
//! - [`training`]: pair sampling, pretraining, k-means, soft assignment, fine-tuning
//! - [`inference`]: fused prediction, evaluation metrics, method comparison
//! - [`synthetic`]: ground-truth bundle generator and benchmark presets
//! - [`pipeline`]: end-to-end orchestration shared by the CLI and tests
//! - [`config`]: key=value run configuration

pub mod config;
pub mod encoder;
pub mod error;
pub mod fiberset;
pub mod functional;
pub mod geometry;
pub mod inference;
pub mod metrics;
pub mod pipeline;
pub mod synthetic;
pub mod textio;
pub mod training;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for `(seed, tag)`; distinct tags give independent streams.
pub fn seeded_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
