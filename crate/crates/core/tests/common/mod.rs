//! Synthetic desk corpus for the acceptance suite: weak shared-polarity
//! gradients, a dark off-center blob, a faint wave, and broadband texture.
//! Like photograph collections, the images share coarse luminance
//! statistics (which makes short average hashes collide incidentally) while
//! per-image texture keeps longer hashes distinct.

use perchash::imgcore::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn diverse_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    // Moderate global contrast with broadband texture, like resized
    // photographs: a weak gradient of consistent polarity (photo corpora
    // share coarse luminance statistics), a dark off-center blob, and fine
    // detail.
    let (gx, gy): (f64, f64) = (rng.random_range(0.02..0.12), rng.random_range(0.02..0.12));
    let (cx, cy): (f64, f64) = (rng.random_range(0.3..0.7), rng.random_range(0.3..0.7));
    let amp: f64 = rng.random_range(-0.12..-0.02);
    let base: f64 = rng.random_range(0.44..0.56);
    let (wx, wy): (f64, f64) = (rng.random_range(2.0..5.0), rng.random_range(2.0..5.0));
    let wave_amp: f64 = rng.random_range(0.0..0.05);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            let x = c as f64 / w as f64;
            let y = r as f64 / h as f64;
            let blob = amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / 0.06).exp();
            let wave =
                wave_amp * (std::f64::consts::TAU * (wx * x + wy * y) + phase).sin();
            let v = base + gx * (x - 0.5) + gy * (y - 0.5) + blob + wave;
            for _ in 0..3 {
                let t: f64 = rng.random_range(-0.07..0.07);
                data.push((v + t).clamp(0.02, 0.98));
            }
        }
    }
    RgbImage::new(h, w, data).expect("generator stays in range")
}

/// A deterministic desk corpus of diverse images.
pub fn desk_corpus(seed: u64, n: usize, h: usize, w: usize) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| diverse_image(&mut rng, h, w)).collect()
}

/// Writes images as 8-bit PNGs named `img00000.png`... and returns the ids.
#[allow(dead_code)]
pub fn write_corpus_dir(dir: &std::path::Path, images: &[RgbImage]) -> Vec<String> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let name = format!("img{i:05}.png");
            perchash::imgcore::save_png8(img, dir.join(&name)).expect("corpus write");
            name
        })
        .collect()
}
