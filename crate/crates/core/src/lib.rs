//! Superpixel-based decoding for semantic segmentation, with a SLIC-style
//! regularizer that pulls soft superpixel assignments towards colour-coherent
//! clusters.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`tape`]: dense `H×W×C` maps and a small reverse-mode
//!   differentiation engine over a closed set of operations.
//! - [`color`]: sRGB to CIELAB.
//! - [`superpixel`]: seed grids, nine-candidate soft assignments, hard
//!   superpixel extraction and a classic SLIC implementation.
//! - [`pooling`]: superpixel down/upsampling, the pooling operator `q` and the
//!   superpixel decoder.
//! - [`losses`]: masked cross-entropy, the SLIC regularizer, the compactness
//!   term and the total loss.
//! - [`annotations`]: coarse-annotation synthesis (erosion, contour tracing,
//!   Douglas-Peucker, rasterization).
//! - [`metrics`]: pixel accuracy, boundary recall and the exact Mann-Whitney U
//!   test.
//! - [`trainer`]: Adam, direct superpixel fitting, a toy encoder with
//!   superpixel decoding, synthetic data and checkpoints.
//! - [`cli`] and [`experiment`]: the command surface used by the `spixreg`
//!   binary.

pub mod annotations;
pub mod cli;
pub mod color;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod netpbm;
pub mod pooling;
pub mod superpixel;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use labels::{LabelMap, UNLABELED};
pub use tensor::FeatureMap;
