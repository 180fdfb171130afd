//! Structural similarity between grayscale images: 8x8 sliding windows
//! with stride 1, `C1 = 0.01^2` and `C2 = 0.03^2` on the unit range,
//! unbiased (co)variances, averaged over all windows.

use crate::imgcore::GrayImage;

use super::AttackError;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, AttackError> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(AttackError::DimensionMismatch {
            a: (a.height(), a.width()),
            b: (b.height(), b.width()),
        });
    }
    let (h, w) = (a.height(), a.width());
    let win = 8.min(h).min(w);
    let n = (win * win) as f64;
    let cov_denom = (n - 1.0).max(1.0);

    let mut total = 0.0;
    let mut windows = 0usize;
    for top in 0..=(h - win) {
        for left in 0..=(w - win) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in top..top + win {
                for c in left..left + win {
                    let x = a.get(r, c);
                    let y = b.get(r, c);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let mu_a = sa / n;
            let mu_b = sb / n;
            let var_a = (saa - n * mu_a * mu_a) / cov_denom;
            let var_b = (sbb - n * mu_b * mu_b) / cov_denom;
            let cov = (sab - n * mu_a * mu_b) / cov_denom;
            total += ((2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2))
                / ((mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}
