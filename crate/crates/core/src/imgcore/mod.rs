//! Image containers and the linear front half of every hash pipeline:
//! decoding, luma conversion, and Lanczos resampling.
//!
//! All pixel arithmetic is floating-point end to end. Reference hash
//! implementations round to 8-bit after the luma step; we keep doubles so
//! the whole pipeline stays differentiable, and document the divergence.

pub mod codec;
pub mod resample;

pub use codec::{load_image, save_png16, save_png8};
pub use resample::{build_resample_operator, lanczos_resize, ResampleOperator};

use thiserror::Error;

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated or corrupt image data: {0}")]
    Truncated(String),
    #[error("image has a zero dimension")]
    ZeroDimension,
    #[error("pixel data length {got} does not match {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("pixel value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("png error on {path}: {message}")]
    Png { path: String, message: String },
}

/// Dense row-major RGB raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbImage {
    /// Builds an image from row-major interleaved RGB data, validating the
    /// `[0, 1]` range and the `h * w * 3` length.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let expected = height * width * 3;
        if data.len() != expected {
            return Err(ImageError::BadLength {
                expected,
                got: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::OutOfRange(bad));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Internal constructor that skips the range check. The differentiable
    /// pipeline evaluates smoothly outside the box, which finite-difference
    /// probes rely on.
    pub(crate) fn from_raw_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// RGB triple at (row, col).
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Dense row-major single-channel raster. Nominally in `[0, 1]` but
/// intermediate pipeline stages may exceed it (Lanczos overshoot).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let expected = height * width;
        if data.len() != expected {
            return Err(ImageError::BadLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// BT.601 luma conversion, `Y = 0.299 R + 0.587 G + 0.114 B`, with no 8-bit
/// quantization.
pub fn to_luma(img: &RgbImage) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
        .collect();
    GrayImage {
        height: img.height,
        width: img.width,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_of_white_is_one() {
        let img = RgbImage::new(1, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let y = to_luma(&img);
        assert!((y.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn luma_of_pure_red() {
        let img = RgbImage::new(1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        assert!((to_luma(&img).get(0, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn luma_weighted_mix() {
        let img = RgbImage::new(1, 1, vec![0.5, 0.25, 0.125]).unwrap();
        assert!((to_luma(&img).get(0, 0) - 0.31050).abs() < 1e-12);
    }

    #[test]
    fn luma_stays_in_unit_range() {
        let mut data = Vec::new();
        for i in 0..64 {
            data.push((i as f64 * 13.0 % 17.0) / 17.0);
        }
        data.truncate(63);
        let img = RgbImage::new(7, 3, data).unwrap();
        for &v in to_luma(&img).data() {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn new_rejects_out_of_range_and_bad_lengths() {
        assert!(matches!(
            RgbImage::new(1, 1, vec![1.2, 0.0, 0.0]),
            Err(ImageError::OutOfRange(_))
        ));
        assert!(matches!(
            RgbImage::new(1, 1, vec![0.0; 4]),
            Err(ImageError::BadLength { .. })
        ));
        assert!(matches!(
            RgbImage::new(0, 1, vec![]),
            Err(ImageError::ZeroDimension)
        ));
    }
}
