//! Probe augmentations for baseline accuracy and threshold calibration.
//!
//! The standard suite is: Gaussian noise sigma 0.02, brightness +/-10%,
//! contrast +/-10%, rescale 0.9x, and a 3x3 box blur. Brightness is an
//! additive shift, contrast scales around 0.5; both clamp back to the unit
//! range. All randomness is drawn from a ChaCha stream keyed by the suite
//! seed and a per-image salt, so augmented probes are reproducible and
//! independent of iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imgcore::{lanczos_resize, GrayImage, RgbImage};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugKind {
    Identity,
    /// Additive Gaussian noise with the given sigma.
    GaussNoise(f64),
    /// Additive brightness shift (e.g. 0.1 or -0.1).
    Brightness(f64),
    /// Contrast scaling around 0.5 by `1 + f`.
    Contrast(f64),
    /// Lanczos rescale of both dimensions by the given factor.
    Rescale(f64),
    /// 3x3 box blur with edge clamping.
    BoxBlur3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugSpec {
    pub kind: AugKind,
    pub seed: u64,
}

impl AugSpec {
    pub fn new(kind: AugKind, seed: u64) -> Result<Self, EvalError> {
        let ok = match kind {
            AugKind::Identity | AugKind::BoxBlur3 => true,
            AugKind::GaussNoise(s) => s > 0.0 && s <= 0.5,
            AugKind::Brightness(f) | AugKind::Contrast(f) => f.abs() <= 0.5 && f != 0.0,
            AugKind::Rescale(f) => f > 0.0 && f <= 4.0,
        };
        if ok {
            Ok(Self { kind, seed })
        } else {
            Err(EvalError::BadAugmentation(format!("{kind:?}")))
        }
    }

    /// Label used in the baselines CSV, e.g. `gauss:0.02` or `rescale:0.9`.
    pub fn label(&self) -> String {
        match self.kind {
            AugKind::Identity => "identity".into(),
            AugKind::GaussNoise(s) => format!("gauss:{s}"),
            AugKind::Brightness(f) => format!("brightness:{f}"),
            AugKind::Contrast(f) => format!("contrast:{f}"),
            AugKind::Rescale(f) => format!("rescale:{f}"),
            AugKind::BoxBlur3 => "boxblur3".into(),
        }
    }

    pub fn parse(text: &str, seed: u64) -> Result<Self, EvalError> {
        let bad = || EvalError::BadAugmentation(text.to_string());
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (text, None),
        };
        let num = |a: Option<&str>| a.and_then(|s| s.parse::<f64>().ok()).ok_or_else(bad);
        let kind = match name {
            "identity" => AugKind::Identity,
            "gauss" => AugKind::GaussNoise(num(arg)?),
            "brightness" => AugKind::Brightness(num(arg)?),
            "contrast" => AugKind::Contrast(num(arg)?),
            "rescale" => AugKind::Rescale(num(arg)?),
            "boxblur3" => AugKind::BoxBlur3,
            _ => return Err(bad()),
        };
        AugSpec::new(kind, seed)
    }
}

/// The documented default suite.
pub fn default_suite(seed: u64) -> Vec<AugSpec> {
    [
        AugKind::GaussNoise(0.02),
        AugKind::Brightness(0.1),
        AugKind::Brightness(-0.1),
        AugKind::Contrast(0.1),
        AugKind::Contrast(-0.1),
        AugKind::Rescale(0.9),
        AugKind::BoxBlur3,
    ]
    .into_iter()
    .map(|kind| AugSpec::new(kind, seed).expect("suite parameters are in range"))
    .collect()
}

/// Applies an augmentation. `salt` individualizes the random stream per
/// image (use a stable hash of the image id).
pub fn augment(img: &RgbImage, aug: &AugSpec, salt: u64) -> RgbImage {
    match aug.kind {
        AugKind::Identity => img.clone(),
        AugKind::GaussNoise(sigma) => {
            let mut rng = ChaCha8Rng::seed_from_u64(aug.seed ^ salt);
            let dist = Normal::new(0.0, sigma).expect("validated sigma");
            map_values(img, |v| (v + dist.sample(&mut rng)).clamp(0.0, 1.0))
        }
        AugKind::Brightness(f) => map_values(img, |v| (v + f).clamp(0.0, 1.0)),
        AugKind::Contrast(f) => map_values(img, |v| (0.5 + (v - 0.5) * (1.0 + f)).clamp(0.0, 1.0)),
        AugKind::Rescale(f) => {
            let out_h = ((img.height() as f64 * f).round() as usize).max(1);
            let out_w = ((img.width() as f64 * f).round() as usize).max(1);
            let mut channels = Vec::with_capacity(3);
            for c in 0..3 {
                let plane: Vec<f64> = img.data().iter().skip(c).step_by(3).copied().collect();
                let gray = GrayImage::new(img.height(), img.width(), plane)
                    .expect("plane matches image dims");
                channels.push(lanczos_resize(&gray, out_h, out_w));
            }
            let mut data = Vec::with_capacity(out_h * out_w * 3);
            for i in 0..out_h * out_w {
                for channel in &channels {
                    // Lanczos can overshoot; clamp back into the box.
                    data.push(channel.data()[i].clamp(0.0, 1.0));
                }
            }
            RgbImage::new(out_h, out_w, data).expect("resize output is nonzero")
        }
        AugKind::BoxBlur3 => {
            let (h, w) = (img.height(), img.width());
            let mut data = vec![0.0; h * w * 3];
            for r in 0..h {
                for c in 0..w {
                    for ch in 0..3 {
                        let mut acc = 0.0;
                        for dr in -1i64..=1 {
                            for dc in -1i64..=1 {
                                let rr = (r as i64 + dr).clamp(0, h as i64 - 1) as usize;
                                let cc = (c as i64 + dc).clamp(0, w as i64 - 1) as usize;
                                acc += img.data()[(rr * w + cc) * 3 + ch];
                            }
                        }
                        data[(r * w + c) * 3 + ch] = acc / 9.0;
                    }
                }
            }
            RgbImage::new(h, w, data).expect("blur preserves dims")
        }
    }
}

fn map_values<F: FnMut(f64) -> f64>(img: &RgbImage, mut f: F) -> RgbImage {
    let data = img.data().iter().map(|&v| f(v)).collect();
    RgbImage::new(img.height(), img.width(), data).expect("mapped values are clamped")
}

/// FNV-1a over an id string; used as the per-image augmentation salt.
pub fn id_salt(id: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
