//! Hard (non-differentiable) forward implementations of aHash, dHash, and
//! pHash, plus a PCA-median hash over embedding vectors.
//!
//! Tie rule: the image hashes binarize with a strict `>` (ties produce 0).
//! The PCA hash binarizes with `>=`; see [`pca`].

pub mod bithash;
pub mod dct;
pub mod pca;

pub use bithash::{hamming, BitHash, HashError};
pub use dct::{dct2, DctMatrix};
pub use pca::{pca_fit, pca_hash, PcaError, PcaHashModel};

use crate::imgcore::{lanczos_resize, to_luma, GrayImage, RgbImage};
use dct::lower_median;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("unsupported hash length {0} (expected 64, 144, or 256)")]
    BadBits(usize),
    #[error("unknown hash algorithm {0:?} (expected ahash, dhash, or phash)")]
    BadAlgo(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashAlgo {
    AHash,
    DHash,
    PHash,
}

impl HashAlgo {
    pub fn name(self) -> &'static str {
        match self {
            HashAlgo::AHash => "ahash",
            HashAlgo::DHash => "dhash",
            HashAlgo::PHash => "phash",
        }
    }

    pub const ALL: [HashAlgo; 3] = [HashAlgo::AHash, HashAlgo::DHash, HashAlgo::PHash];
}

impl std::fmt::Display for HashAlgo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for HashAlgo {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        match s.to_ascii_lowercase().as_str() {
            "ahash" => Ok(HashAlgo::AHash),
            "dhash" => Ok(HashAlgo::DHash),
            "phash" => Ok(HashAlgo::PHash),
            other => Err(SpecError::BadAlgo(other.to_string())),
        }
    }
}

/// Algorithm plus bit length; fully determines the forward pipeline
/// geometry. Valid lengths are 64, 144, and 256 bits (square grids of side
/// 8, 12, 16).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashSpec {
    algo: HashAlgo,
    bits: usize,
}

impl HashSpec {
    pub fn new(algo: HashAlgo, bits: usize) -> Result<Self, SpecError> {
        match bits {
            64 | 144 | 256 => Ok(Self { algo, bits }),
            other => Err(SpecError::BadBits(other)),
        }
    }

    pub fn algo(&self) -> HashAlgo {
        self.algo
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Hash grid side `s = sqrt(bits)`.
    pub fn grid_side(&self) -> usize {
        match self.bits {
            64 => 8,
            144 => 12,
            256 => 16,
            _ => unreachable!("validated in new()"),
        }
    }

    /// Geometry of the resized luma image feeding the algorithm transform:
    /// `s x s` for aHash, `s x (s+1)` for dHash, `2s x 2s` for pHash.
    pub fn resize_dims(&self) -> (usize, usize) {
        let s = self.grid_side();
        match self.algo {
            HashAlgo::AHash => (s, s),
            HashAlgo::DHash => (s, s + 1),
            HashAlgo::PHash => (2 * s, 2 * s),
        }
    }

    /// The `algo_bits` label used in reports and CSV output.
    pub fn label(&self) -> String {
        format!("{}_{}", self.algo.name(), self.bits)
    }
}

impl std::fmt::Display for HashSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Mean computed relative to the first element, so a slice of identical
/// values yields exactly that value (strict tie rules depend on it).
pub(crate) fn mean_of(values: &[f64]) -> f64 {
    let base = values[0];
    base + values.iter().map(|v| v - base).sum::<f64>() / values.len() as f64
}

/// Hashes an image under the given spec, dispatching on the algorithm.
pub fn hash_image(img: &RgbImage, spec: HashSpec) -> BitHash {
    match spec.algo() {
        HashAlgo::AHash => ahash(img, spec),
        HashAlgo::DHash => dhash(img, spec),
        HashAlgo::PHash => phash(img, spec),
    }
}

fn resized_grid(img: &RgbImage, spec: HashSpec) -> GrayImage {
    let (h, w) = spec.resize_dims();
    lanczos_resize(&to_luma(img), h, w)
}

/// Average hash: luma, resize to `s x s`, threshold each cell against the
/// grid mean (strict `>`).
pub fn ahash(img: &RgbImage, spec: HashSpec) -> BitHash {
    assert_eq!(spec.algo(), HashAlgo::AHash);
    ahash_from_grid(&resized_grid(img, spec))
}

/// Difference hash: luma, resize to `s x (s+1)`, set a bit where the
/// horizontal gradient is strictly positive.
pub fn dhash(img: &RgbImage, spec: HashSpec) -> BitHash {
    assert_eq!(spec.algo(), HashAlgo::DHash);
    dhash_from_grid(&resized_grid(img, spec))
}

/// Perceptual hash: luma, resize to `2s x 2s`, orthonormal 2-D DCT-II, keep
/// the top-left `s x s` block (DC included), threshold against the block's
/// lower median (strict `>`).
pub fn phash(img: &RgbImage, spec: HashSpec) -> BitHash {
    assert_eq!(spec.algo(), HashAlgo::PHash);
    phash_from_grid(&resized_grid(img, spec))
}

/// aHash decision stage on an already-resized `s x s` grid. Any image whose
/// resized grid matches another's bit-for-bit gets the same hash; exposing
/// the stage makes that cascade directly testable.
pub fn ahash_from_grid(grid: &GrayImage) -> BitHash {
    assert_eq!(grid.height(), grid.width());
    let m = mean_of(grid.data());
    BitHash::from_bits(&grid.data().iter().map(|&v| v > m).collect::<Vec<_>>())
}

/// dHash decision stage on an `s x (s+1)` grid.
pub fn dhash_from_grid(grid: &GrayImage) -> BitHash {
    let s = grid.height();
    assert_eq!(grid.width(), s + 1);
    let mut bits = Vec::with_capacity(s * s);
    for r in 0..s {
        for c in 0..s {
            bits.push(grid.get(r, c + 1) - grid.get(r, c) > 0.0);
        }
    }
    BitHash::from_bits(&bits)
}

/// pHash decision stage on a `2s x 2s` grid.
pub fn phash_from_grid(grid: &GrayImage) -> BitHash {
    let n = grid.height();
    assert_eq!(grid.width(), n);
    assert_eq!(n % 2, 0);
    let s = n / 2;
    let coeffs = DctMatrix::new(n).forward(grid.data());
    let mut block = Vec::with_capacity(s * s);
    for r in 0..s {
        for c in 0..s {
            block.push(coeffs[r * n + c]);
        }
    }
    let m = lower_median(&block);
    BitHash::from_bits(&block.iter().map(|&v| v > m).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(algo: HashAlgo, bits: usize) -> HashSpec {
        HashSpec::new(algo, bits).unwrap()
    }

    fn constant_image(h: usize, w: usize, v: f64) -> RgbImage {
        RgbImage::new(h, w, vec![v; h * w * 3]).unwrap()
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
        let data = (0..h * w * 3).map(|_| rng.random::<f64>()).collect();
        RgbImage::new(h, w, data).unwrap()
    }

    #[test]
    fn spec_validates_bits() {
        assert!(HashSpec::new(HashAlgo::AHash, 128).is_err());
        assert_eq!(spec(HashAlgo::PHash, 256).resize_dims(), (32, 32));
        assert_eq!(spec(HashAlgo::DHash, 64).resize_dims(), (8, 9));
        assert_eq!(spec(HashAlgo::AHash, 144).resize_dims(), (12, 12));
    }

    #[test]
    fn ahash_of_constant_image_is_zero() {
        // No pixel strictly exceeds the mean.
        let h = ahash(&constant_image(20, 20, 0.6), spec(HashAlgo::AHash, 64));
        assert_eq!(h.count_ones(), 0);
    }

    #[test]
    fn ahash_of_grid_sized_checkerboard_marks_the_ones() {
        let mut data = Vec::new();
        for r in 0..8 {
            for c in 0..8 {
                let v = if (r + c) % 2 == 0 { 1.0 } else { 0.0 };
                data.extend_from_slice(&[v, v, v]);
            }
        }
        let img = RgbImage::new(8, 8, data).unwrap();
        let h = ahash(&img, spec(HashAlgo::AHash, 64));
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(h.bit(r * 8 + c), (r + c) % 2 == 0);
            }
        }
    }

    #[test]
    fn dhash_of_constant_image_is_zero() {
        let h = dhash(&constant_image(30, 17, 0.3), spec(HashAlgo::DHash, 144));
        assert_eq!(h.count_ones(), 0);
    }

    #[test]
    fn dhash_of_increasing_ramp_is_all_ones() {
        // Image already at grid size, strictly increasing along each row, so
        // the identity resize keeps every horizontal difference positive.
        let (s, w) = (8, 9);
        let mut data = Vec::new();
        for _ in 0..s {
            for c in 0..w {
                let v = c as f64 / (w - 1) as f64;
                data.extend_from_slice(&[v, v, v]);
            }
        }
        let img = RgbImage::new(s, w, data).unwrap();
        let h = dhash(&img, spec(HashAlgo::DHash, 64));
        assert_eq!(h.count_ones(), 64);
    }

    #[test]
    fn phash_of_black_image_is_zero() {
        let h = phash(&constant_image(40, 40, 0.0), spec(HashAlgo::PHash, 64));
        assert_eq!(h.count_ones(), 0);
    }

    #[test]
    fn phash_of_bright_constant_image_sets_only_dc() {
        let h = phash(&constant_image(40, 40, 0.8), spec(HashAlgo::PHash, 256));
        assert!(h.bit(0));
        assert_eq!(h.count_ones(), 1);
    }

    // Brute-force pipeline oracle: recomputes luma, a dense resize from the
    // kernel formula, and the decision stage from scratch.
    mod oracle {
        use super::*;
        use crate::imgcore::resample::lanczos3;

        fn dense_operator(in_len: usize, out_len: usize) -> Vec<f64> {
            let scale = in_len as f64 / out_len as f64;
            let stretch = scale.max(1.0);
            let radius = 3.0 * stretch;
            let mut mat = vec![0.0; out_len * in_len];
            for i in 0..out_len {
                let center = (i as f64 + 0.5) * scale;
                let mut total = 0.0;
                let lo = (center - radius - 0.5).ceil() as i64;
                let hi = (center + radius - 0.5).floor() as i64;
                for j in lo..=hi {
                    let w = lanczos3((j as f64 + 0.5 - center) / stretch);
                    total += w;
                    mat[i * in_len + j.clamp(0, in_len as i64 - 1) as usize] += w;
                }
                for j in 0..in_len {
                    mat[i * in_len + j] /= total;
                }
            }
            mat
        }

        pub fn grid(img: &RgbImage, out_h: usize, out_w: usize) -> Vec<f64> {
            let (h, w) = (img.height(), img.width());
            let mut luma = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let px = img.pixel(r, c);
                    luma[r * w + c] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
                }
            }
            let rv = dense_operator(h, out_h);
            let rh = dense_operator(w, out_w);
            let mut mid = vec![0.0; out_h * w];
            for r in 0..out_h {
                for c in 0..w {
                    mid[r * w + c] = (0..h).map(|k| rv[r * h + k] * luma[k * w + c]).sum();
                }
            }
            let mut out = vec![0.0; out_h * out_w];
            for r in 0..out_h {
                for c in 0..out_w {
                    out[r * out_w + c] = (0..w).map(|k| mid[r * w + k] * rh[c * w + k]).sum();
                }
            }
            out
        }

        pub fn ahash_bits(img: &RgbImage, s: usize) -> Vec<bool> {
            let g = grid(img, s, s);
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|&v| v > m).collect()
        }

        pub fn dhash_bits(img: &RgbImage, s: usize) -> Vec<bool> {
            let g = grid(img, s, s + 1);
            let mut bits = Vec::new();
            for r in 0..s {
                for c in 0..s {
                    bits.push(g[r * (s + 1) + c + 1] - g[r * (s + 1) + c] > 0.0);
                }
            }
            bits
        }

        pub fn phash_bits(img: &RgbImage, s: usize) -> Vec<bool> {
            let n = 2 * s;
            let g = grid(img, n, n);
            let coeffs = super::super::dct::dct2(&g, n);
            let mut block = Vec::new();
            for r in 0..s {
                for c in 0..s {
                    block.push(coeffs[r * n + c]);
                }
            }
            let mut sorted = block.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = sorted[(sorted.len() - 1) / 2];
            block.iter().map(|&v| v > m).collect()
        }
    }

    #[test]
    fn random_images_match_the_pipeline_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..3 {
            let img = random_image(&mut rng, 64, 64);
            for bits in [64usize, 144, 256] {
                let s = spec(HashAlgo::AHash, bits).grid_side();
                let oracle = BitHash::from_bits(&oracle::ahash_bits(&img, s));
                let got = ahash(&img, spec(HashAlgo::AHash, bits));
                // The oracle's dense resize may differ in the last ulp around
                // exact threshold ties, which random images do not produce.
                assert_eq!(got, oracle, "ahash_{bits} trial {trial}");

                let oracle = BitHash::from_bits(&oracle::dhash_bits(&img, s));
                let got = dhash(&img, spec(HashAlgo::DHash, bits));
                assert_eq!(got, oracle, "dhash_{bits} trial {trial}");

                let oracle = BitHash::from_bits(&oracle::phash_bits(&img, s));
                let got = phash(&img, spec(HashAlgo::PHash, bits));
                assert_eq!(got, oracle, "phash_{bits} trial {trial}");
            }
        }
    }

    #[test]
    fn hashing_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let img = random_image(&mut rng, 50, 40);
        for algo in HashAlgo::ALL {
            let sp = spec(algo, 256);
            assert_eq!(hash_image(&img, sp), hash_image(&img, sp));
        }
    }

    #[test]
    fn identical_resized_grids_cascade_to_identical_hashes() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // Copying the resized grid between two pipelines must force equal
        // hashes no matter what the downstream algorithm is.
        let a = random_image(&mut rng, 33, 47);
        let grid16 = lanczos_resize(&to_luma(&a), 16, 16);
        assert_eq!(ahash_from_grid(&grid16), ahash_from_grid(&grid16.clone()));
        let grid32 = lanczos_resize(&to_luma(&a), 32, 32);
        assert_eq!(phash_from_grid(&grid32), phash_from_grid(&grid32.clone()));
        let grid17 = lanczos_resize(&to_luma(&a), 16, 17);
        assert_eq!(dhash_from_grid(&grid17), dhash_from_grid(&grid17.clone()));
    }

    #[test]
    fn small_noise_rarely_moves_the_hash() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = Normal::new(0.0, 0.005).unwrap();
        for algo in HashAlgo::ALL {
            let sp = spec(algo, 256);
            let mut robust = 0;
            let total = 100;
            for _ in 0..total {
                let img = smooth_image(&mut rng, 48, 48);
                let noisy_data: Vec<f64> = img
                    .data()
                    .iter()
                    .map(|&v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect();
                let noisy = RgbImage::new(48, 48, noisy_data).unwrap();
                let d = hamming(&hash_image(&img, sp), &hash_image(&noisy, sp)).unwrap();
                if d <= sp.bits() / 10 {
                    robust += 1;
                }
            }
            assert!(robust >= 90, "{algo}: only {robust}/{total} robust");
        }
    }

    /// Photograph stand-in: a plane gradient, a broad blob, and fine
    /// texture. The texture keeps DCT coefficients and gradient signs away
    /// from exact ties, like real image detail does.
    fn smooth_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
        let (gx, gy): (f64, f64) = (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
        let (cx, cy): (f64, f64) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
        let amp: f64 = rng.random_range(-0.3..0.3);
        let base: f64 = rng.random_range(0.3..0.7);
        let mut data = Vec::with_capacity(h * w * 3);
        for r in 0..h {
            for c in 0..w {
                let x = c as f64 / w as f64;
                let y = r as f64 / h as f64;
                let blob = amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / 0.05).exp();
                let texture: f64 = rng.random_range(-0.06..0.06);
                let v = (base + gx * (x - 0.5) + gy * (y - 0.5) + blob + texture).clamp(0.0, 1.0);
                data.extend_from_slice(&[v, v, v]);
            }
        }
        RgbImage::new(h, w, data).unwrap()
    }
}
