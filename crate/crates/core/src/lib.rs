//! Shallow perceptual image hashing and gradient-based collision attacks.
//!
//! The crate is organized as a pipeline:
//!
//! * [`imgcore`] — image decoding, luma conversion, and Lanczos resampling
//!   expressed as explicit linear operators.
//! * [`hashes`] — hard (non-differentiable) aHash / dHash / pHash forward
//!   implementations, the packed [`hashes::BitHash`] representation with its
//!   Hamming metric, and a PCA-median hash over externally supplied
//!   embedding vectors.
//! * [`diffpipe`] — a differentiable relaxation of each hash pipeline with
//!   stage-wise forward outputs (the attackable split points) and exact
//!   vector-Jacobian products back to the source image.
//! * [`attack`] — collision-attack objectives and the Adam-based optimizer
//!   that produces adversarial images, plus perceptual metrics (L2, SSIM)
//!   for reporting.
//! * [`evalharness`] — hash banks, nearest-neighbor baselines, incidental
//!   collision rates, precision-calibrated match thresholds, and gray-box
//!   transfer matrices.

pub mod attack;
pub mod diffpipe;
pub mod evalharness;
pub mod hashes;
pub mod imgcore;
