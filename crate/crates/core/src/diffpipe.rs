//! Differentiable relaxation of the hash pipelines.
//!
//! Each forward pass exposes the pipeline's split points:
//!
//! * `P1` — the resized luma grid;
//! * `P2` — the algorithm transform (mean-subtracted grid for aHash,
//!   horizontal differences for dHash, low-frequency DCT block minus a
//!   detached median for pHash);
//! * `P3` — the pre-binarization logits (`P2` flattened row-major);
//! * soft bits — `sigmoid(tau * P3)`, a soft stand-in for the final step
//!   function.
//!
//! Backpropagation to the source image is an exact adjoint at every stage.
//! The one subgradient choice is the pHash median: it is recomputed every
//! forward pass but treated as a constant inside each backward pass (it is
//! piecewise-constant almost everywhere). The aHash mean, being linear, IS
//! differentiated through; the asymmetry is deliberate.

use thiserror::Error;

use crate::hashes::dct::lower_median;
use crate::hashes::{mean_of, BitHash, DctMatrix, HashAlgo, HashSpec};
use crate::imgcore::resample::{
    apply_separable, apply_separable_transpose, build_resample_operator, ResampleOperator,
};
use crate::imgcore::{to_luma, GrayImage, RgbImage, LUMA_WEIGHTS};

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("upstream gradient has length {got}, stage {stage:?} expects {expected}")]
    ShapeMismatch {
        stage: Stage,
        expected: usize,
        got: usize,
    },
    #[error("image is {got_h}x{got_w} but the pipeline was built for {want_h}x{want_w}")]
    GeometryMismatch {
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },
}

/// A split point of the differentiable pipeline. The serialized names used
/// in reports and CSV files are `p1`, `p2`, `p3`, and `soft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// The resized luma grid (split point `p1`).
    ResizedGrid,
    /// The algorithm transform (split point `p2`).
    Transform,
    /// Pre-binarization logits (split point `p3`).
    Logits,
    /// Temperature-scaled sigmoid of the logits.
    SoftBits,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::ResizedGrid => "p1",
            Stage::Transform => "p2",
            Stage::Logits => "p3",
            Stage::SoftBits => "soft",
        }
    }

    /// The attackable split points, in pipeline order.
    pub const SPLITS: [Stage; 3] = [Stage::ResizedGrid, Stage::Transform, Stage::Logits];

    pub const ALL: [Stage; 4] = [
        Stage::ResizedGrid,
        Stage::Transform,
        Stage::Logits,
        Stage::SoftBits,
    ];
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "grid" => Ok(Stage::ResizedGrid),
            "p2" | "transform" => Ok(Stage::Transform),
            "p3" | "logits" => Ok(Stage::Logits),
            "soft" | "soft_bits" => Ok(Stage::SoftBits),
            other => Err(format!(
                "unknown stage {other:?} (expected p1, p2, p3, or soft)"
            )),
        }
    }
}

/// Sigmoid temperature. Pixel-scale logits are small (roughly 0.01..0.1),
/// so the default of 50 places the sigmoid in its responsive range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self, DiffError> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Self(tau))
        } else {
            Err(DiffError::BadTemperature(tau))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self(50.0)
    }
}

/// The ordered intermediate tensors of one forward pass.
#[derive(Debug, Clone)]
pub struct StageOutputs {
    /// P0: luma at source resolution.
    pub luma: GrayImage,
    /// P1: resized luma grid.
    pub grid: GrayImage,
    /// P2: algorithm transform, row-major, `bits` values.
    pub transform: Vec<f64>,
    /// P3: pre-binarization logits; identical values to `transform`.
    pub logits: Vec<f64>,
    /// `sigmoid(tau * logits)`, clamped to the open interval (0, 1).
    pub soft_bits: Vec<f64>,
    /// The detached pHash median (None for aHash/dHash).
    pub median: Option<f64>,
}

impl StageOutputs {
    /// Hard-thresholds the logits at zero (strict `>`), which reproduces
    /// the hard hash bit-for-bit.
    pub fn hard_bits(&self) -> BitHash {
        BitHash::from_bits(&self.logits.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
    }

    pub fn stage_values(&self, stage: Stage) -> &[f64] {
        match stage {
            Stage::ResizedGrid => self.grid.data(),
            Stage::Transform => &self.transform,
            Stage::Logits => &self.logits,
            Stage::SoftBits => &self.soft_bits,
        }
    }
}

/// Differentiable pipeline for one (source geometry, spec, temperature)
/// combination. Construction precomputes the resampling operators and DCT
/// basis; forward and backward passes then share them, which also makes the
/// resized grid bit-identical to what the hard hashes compute.
#[derive(Debug, Clone)]
pub struct DiffPipeline {
    spec: HashSpec,
    tau: f64,
    in_h: usize,
    in_w: usize,
    row_op: ResampleOperator,
    col_op: ResampleOperator,
    dct: Option<DctMatrix>,
}

impl DiffPipeline {
    pub fn new(in_h: usize, in_w: usize, spec: HashSpec, tau: Temperature) -> Self {
        let (grid_h, grid_w) = spec.resize_dims();
        let dct = match spec.algo() {
            HashAlgo::PHash => Some(DctMatrix::new(grid_h)),
            _ => None,
        };
        Self {
            spec,
            tau: tau.value(),
            in_h,
            in_w,
            row_op: build_resample_operator(in_w, grid_w),
            col_op: build_resample_operator(in_h, grid_h),
            dct,
        }
    }

    pub fn spec(&self) -> HashSpec {
        self.spec
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn source_dims(&self) -> (usize, usize) {
        (self.in_h, self.in_w)
    }

    /// Length of the tensor at a stage (for shaping upstream gradients).
    pub fn stage_len(&self, stage: Stage) -> usize {
        match stage {
            Stage::ResizedGrid => {
                let (h, w) = self.spec.resize_dims();
                h * w
            }
            _ => self.spec.bits(),
        }
    }

    pub fn forward(&self, img: &RgbImage) -> Result<StageOutputs, DiffError> {
        self.forward_with_median(img, None)
    }

    /// Forward pass with an optionally frozen pHash median. The
    /// finite-difference harness freezes the median at the unperturbed
    /// image's value so the probes measure exactly the function whose
    /// adjoint the backward pass implements.
    pub fn forward_with_median(
        &self,
        img: &RgbImage,
        frozen_median: Option<f64>,
    ) -> Result<StageOutputs, DiffError> {
        if img.height() != self.in_h || img.width() != self.in_w {
            return Err(DiffError::GeometryMismatch {
                want_h: self.in_h,
                want_w: self.in_w,
                got_h: img.height(),
                got_w: img.width(),
            });
        }
        let luma = to_luma(img);
        let grid = apply_separable(&self.col_op, &self.row_op, &luma);
        let s = self.spec.grid_side();
        let (transform, median) = match self.spec.algo() {
            HashAlgo::AHash => {
                let m = mean_of(grid.data());
                (grid.data().iter().map(|v| v - m).collect::<Vec<_>>(), None)
            }
            HashAlgo::DHash => {
                let mut t = Vec::with_capacity(s * s);
                for r in 0..s {
                    for c in 0..s {
                        t.push(grid.get(r, c + 1) - grid.get(r, c));
                    }
                }
                (t, None)
            }
            HashAlgo::PHash => {
                let n = 2 * s;
                let coeffs = self
                    .dct
                    .as_ref()
                    .expect("pHash pipelines carry a DCT basis")
                    .forward(grid.data());
                let mut block = Vec::with_capacity(s * s);
                for r in 0..s {
                    for c in 0..s {
                        block.push(coeffs[r * n + c]);
                    }
                }
                let m = frozen_median.unwrap_or_else(|| lower_median(&block));
                (block.iter().map(|v| v - m).collect(), Some(m))
            }
        };
        let logits = transform.clone();
        let soft_bits = logits.iter().map(|&l| sigmoid(self.tau * l)).collect();
        Ok(StageOutputs {
            luma,
            grid,
            transform,
            logits,
            soft_bits,
            median,
        })
    }

    /// Exact vector-Jacobian product: pulls an upstream gradient at `stage`
    /// back to a gradient shaped like the source image (`h * w * 3`,
    /// row-major interleaved RGB).
    pub fn vjp(
        &self,
        outputs: &StageOutputs,
        stage: Stage,
        upstream: &[f64],
    ) -> Result<Vec<f64>, DiffError> {
        let expected = self.stage_len(stage);
        if upstream.len() != expected {
            return Err(DiffError::ShapeMismatch {
                stage,
                expected,
                got: upstream.len(),
            });
        }
        let logits_grad: Vec<f64>;
        let transform_grad: &[f64] = match stage {
            Stage::ResizedGrid => return Ok(self.grid_vjp(upstream)),
            Stage::SoftBits => {
                logits_grad = upstream
                    .iter()
                    .zip(&outputs.soft_bits)
                    .map(|(u, &sb)| u * self.tau * sb * (1.0 - sb))
                    .collect();
                &logits_grad
            }
            // P3 is P2 flattened, so both are a plain pass-through.
            Stage::Logits | Stage::Transform => upstream,
        };

        let s = self.spec.grid_side();
        let (grid_h, grid_w) = self.spec.resize_dims();
        let mut grid_grad = vec![0.0; grid_h * grid_w];
        match self.spec.algo() {
            HashAlgo::AHash => {
                // y = x - mean(x): the Jacobian I - 11^T/n is symmetric.
                let m = mean_of(transform_grad);
                for (g, u) in grid_grad.iter_mut().zip(transform_grad) {
                    *g = u - m;
                }
            }
            HashAlgo::DHash => {
                for r in 0..s {
                    for c in 0..s {
                        let u = transform_grad[r * s + c];
                        grid_grad[r * grid_w + c + 1] += u;
                        grid_grad[r * grid_w + c] -= u;
                    }
                }
            }
            HashAlgo::PHash => {
                // Median detached: the adjoint embeds the block gradient in
                // the full spectrum and runs the DCT adjoint.
                let n = 2 * s;
                let mut coeff_grad = vec![0.0; n * n];
                for r in 0..s {
                    for c in 0..s {
                        coeff_grad[r * n + c] = transform_grad[r * s + c];
                    }
                }
                grid_grad = self
                    .dct
                    .as_ref()
                    .expect("pHash pipelines carry a DCT basis")
                    .adjoint(&coeff_grad);
            }
        }
        Ok(self.grid_vjp(&grid_grad))
    }

    /// Adjoint of the linear front half (resize then luma), from a gradient
    /// at the resized grid down to the RGB source.
    fn grid_vjp(&self, grid_grad: &[f64]) -> Vec<f64> {
        let (grid_h, grid_w) = self.spec.resize_dims();
        let g = GrayImage::new(grid_h, grid_w, grid_grad.to_vec())
            .expect("grid gradient matches pipeline geometry");
        let luma_grad = apply_separable_transpose(&self.col_op, &self.row_op, &g);
        let mut out = Vec::with_capacity(self.in_h * self.in_w * 3);
        for &l in luma_grad.data() {
            out.push(l * LUMA_WEIGHTS[0]);
            out.push(l * LUMA_WEIGHTS[1]);
            out.push(l * LUMA_WEIGHTS[2]);
        }
        out
    }

    /// Forward map of the linear front half only (luma then resize), on raw
    /// RGB data that need not satisfy the `[0, 1]` box.
    pub fn grid_of_raw(&self, rgb_data: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rgb_data.len(), self.in_h * self.in_w * 3);
        let img = RgbImage::from_raw_unchecked(self.in_h, self.in_w, rgb_data.to_vec());
        let luma = to_luma(&img);
        apply_separable(&self.col_op, &self.row_op, &luma)
            .data()
            .to_vec()
    }

    /// Adjoint of [`Self::grid_of_raw`].
    pub fn grid_vjp_raw(&self, grid_grad: &[f64]) -> Vec<f64> {
        self.grid_vjp(grid_grad)
    }
}

fn sigmoid(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    // Keep the output strictly inside (0, 1) even when exp saturates.
    s.clamp(f64::MIN_POSITIVE, 1.0_f64.next_down())
}

/// One-shot forward pass (builds a pipeline internally).
pub fn forward_stages(
    img: &RgbImage,
    spec: HashSpec,
    tau: Temperature,
) -> Result<StageOutputs, DiffError> {
    DiffPipeline::new(img.height(), img.width(), spec, tau).forward(img)
}

/// One-shot vector-Jacobian product to the source image.
pub fn vjp_to_source(
    img: &RgbImage,
    spec: HashSpec,
    tau: Temperature,
    stage: Stage,
    upstream: &[f64],
) -> Result<Vec<f64>, DiffError> {
    let pipe = DiffPipeline::new(img.height(), img.width(), spec, tau);
    let outputs = pipe.forward(img)?;
    pipe.vjp(&outputs, stage, upstream)
}

/// Compares the analytic VJP against central finite differences of
/// `<upstream, stage(img + eps * v)>` over random `upstream`/`v` pairs and
/// returns the worst relative error.
///
/// The pHash median is frozen at the unperturbed image's value for the
/// probe evaluations, matching the backward pass's detached-median
/// semantics.
pub fn finite_diff_check(
    img: &RgbImage,
    spec: HashSpec,
    tau: Temperature,
    stage: Stage,
    trials: usize,
    step: f64,
) -> Result<f64, DiffError> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    assert!(step > 0.0);
    let pipe = DiffPipeline::new(img.height(), img.width(), spec, tau);
    let base = pipe.forward(img)?;
    let frozen = base.median;
    let stage_len = pipe.stage_len(stage);
    let img_len = img.data().len();

    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let upstream: Vec<f64> = (0..stage_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direction: Vec<f64> = (0..img_len).map(|_| rng.random_range(-1.0..1.0)).collect();

        let grad = pipe.vjp(&base, stage, &upstream)?;
        let analytic: f64 = grad.iter().zip(&direction).map(|(g, v)| g * v).sum();

        let probe = |sign: f64| -> Result<f64, DiffError> {
            let data: Vec<f64> = img
                .data()
                .iter()
                .zip(&direction)
                .map(|(x, v)| x + sign * step * v)
                .collect();
            let shifted = RgbImage::from_raw_unchecked(img.height(), img.width(), data);
            let outs = pipe.forward_with_median(&shifted, frozen)?;
            Ok(outs
                .stage_values(stage)
                .iter()
                .zip(&upstream)
                .map(|(s, u)| s * u)
                .sum())
        };
        let fd = (probe(1.0)? - probe(-1.0)?) / (2.0 * step);
        let denom = analytic.abs().max(fd.abs()).max(1e-12);
        worst = worst.max((analytic - fd).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashes::{self, hamming};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(algo: HashAlgo, bits: usize) -> HashSpec {
        HashSpec::new(algo, bits).unwrap()
    }

    fn tau_default() -> Temperature {
        Temperature::default()
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
        let data = (0..h * w * 3).map(|_| rng.random::<f64>()).collect();
        RgbImage::new(h, w, data).unwrap()
    }

    #[test]
    fn temperature_rejects_nonpositive_values() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-3.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert_eq!(Temperature::default().value(), 50.0);
    }

    #[test]
    fn constant_image_ahash_gives_zero_transform_and_half_soft_bits() {
        let img = RgbImage::new(24, 24, vec![0.4; 24 * 24 * 3]).unwrap();
        let outs = forward_stages(&img, spec(HashAlgo::AHash, 64), tau_default()).unwrap();
        for &t in &outs.transform {
            assert_eq!(t, 0.0);
        }
        for &sb in &outs.soft_bits {
            assert_eq!(sb, 0.5);
        }
    }

    #[test]
    fn thresholded_logits_equal_the_hard_hash() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..4 {
            let img = random_image(&mut rng, 37, 29);
            for algo in HashAlgo::ALL {
                for bits in [64usize, 144, 256] {
                    let sp = spec(algo, bits);
                    let outs = forward_stages(&img, sp, tau_default()).unwrap();
                    let hard = hashes::hash_image(&img, sp);
                    assert_eq!(
                        hamming(&outs.hard_bits(), &hard).unwrap(),
                        0,
                        "{sp} disagreed"
                    );
                }
            }
        }
    }

    #[test]
    fn soft_bits_at_half_match_hard_bits_away_from_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(405);
        let img = random_image(&mut rng, 32, 32);
        for algo in HashAlgo::ALL {
            let sp = spec(algo, 256);
            let outs = forward_stages(&img, sp, tau_default()).unwrap();
            let hard = hashes::hash_image(&img, sp);
            for j in 0..sp.bits() {
                if outs.logits[j].abs() >= 1e-9 {
                    assert_eq!(outs.soft_bits[j] > 0.5, hard.bit(j), "bit {j} of {sp}");
                }
            }
        }
    }

    #[test]
    fn soft_bits_stay_strictly_inside_the_unit_interval() {
        // A pHash DC logit is large enough to saturate a plain sigmoid.
        let img = RgbImage::new(32, 32, vec![0.9; 32 * 32 * 3]).unwrap();
        let outs = forward_stages(&img, spec(HashAlgo::PHash, 256), tau_default()).unwrap();
        for &sb in &outs.soft_bits {
            assert!(sb > 0.0 && sb < 1.0);
        }
    }

    #[test]
    fn phash_transform_matches_brute_force_forward_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(406);
        let img = random_image(&mut rng, 32, 32);
        let sp = spec(HashAlgo::PHash, 64);
        let outs = forward_stages(&img, sp, tau_default()).unwrap();

        // Oracle: independent dense recomputation of grid, DCT, and median.
        let grid = crate::imgcore::lanczos_resize(&to_luma(&img), 16, 16);
        let coeffs = crate::hashes::dct2(grid.data(), 16);
        let mut block = Vec::new();
        for r in 0..8 {
            for c in 0..8 {
                block.push(coeffs[r * 16 + c]);
            }
        }
        let mut sorted = block.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = sorted[(sorted.len() - 1) / 2];
        for (got, want) in outs.transform.iter().zip(block.iter().map(|v| v - med)) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(outs.median, Some(med));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(407);
        let img = random_image(&mut rng, 20, 20);
        let sp = spec(HashAlgo::DHash, 64);
        let zeros = vec![0.0; 64];
        let grad = vjp_to_source(&img, sp, tau_default(), Stage::Logits, &zeros).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn identity_resize_p1_gradient_is_the_luma_weights() {
        // Image already at grid size: the resize is the identity, so a
        // single-pixel upstream at P1 lands exactly on that pixel's luma
        // coefficients.
        let mut rng = ChaCha8Rng::seed_from_u64(408);
        let img = random_image(&mut rng, 8, 8);
        let sp = spec(HashAlgo::AHash, 64);
        let mut upstream = vec![0.0; 64];
        upstream[3 * 8 + 5] = 1.0;
        let grad = vjp_to_source(&img, sp, tau_default(), Stage::ResizedGrid, &upstream).unwrap();
        for p in 0..64 {
            for c in 0..3 {
                let want = if p == 3 * 8 + 5 { LUMA_WEIGHTS[c] } else { 0.0 };
                assert_eq!(grad[p * 3 + c], want, "pixel {p} channel {c}");
            }
        }
    }

    #[test]
    fn vjp_rejects_bad_shapes() {
        let img = RgbImage::new(8, 8, vec![0.5; 192]).unwrap();
        let err = vjp_to_source(
            &img,
            spec(HashAlgo::AHash, 64),
            tau_default(),
            Stage::Logits,
            &[1.0],
        );
        assert!(matches!(err, Err(DiffError::ShapeMismatch { .. })));
    }

    #[test]
    fn finite_differences_confirm_linear_stages_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(409);
        let img = random_image(&mut rng, 16, 16);
        for (algo, stage) in [
            (HashAlgo::AHash, Stage::ResizedGrid),
            (HashAlgo::AHash, Stage::Transform),
            (HashAlgo::DHash, Stage::ResizedGrid),
            (HashAlgo::DHash, Stage::Transform),
        ] {
            let err =
                finite_diff_check(&img, spec(algo, 64), tau_default(), stage, 3, 1e-4).unwrap();
            assert!(err < 1e-6, "{algo} {stage}: {err}");
        }
    }

    #[test]
    fn finite_differences_confirm_soft_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(410);
        let img = random_image(&mut rng, 16, 16);
        for algo in HashAlgo::ALL {
            let err = finite_diff_check(
                &img,
                spec(algo, 64),
                tau_default(),
                Stage::SoftBits,
                3,
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-4, "{algo} soft bits: {err}");
        }
    }

    #[test]
    fn finite_differences_confirm_phash_transform_with_detached_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(411);
        let img = random_image(&mut rng, 16, 16);
        let err = finite_diff_check(
            &img,
            spec(HashAlgo::PHash, 64),
            tau_default(),
            Stage::Transform,
            3,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-4, "phash transform: {err}");
    }

    #[test]
    fn adjoint_dot_product_identity_holds_per_stage() {
        // <vjp(u), v> must equal <u, J v>, with J v taken by forward
        // differences of the frozen-median forward map.
        let mut rng = ChaCha8Rng::seed_from_u64(412);
        let img = random_image(&mut rng, 12, 10);
        for algo in HashAlgo::ALL {
            let sp = spec(algo, 64);
            let pipe = DiffPipeline::new(12, 10, sp, tau_default());
            let base = pipe.forward(&img).unwrap();
            for stage in Stage::ALL {
                let n = pipe.stage_len(stage);
                let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..img.data().len())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                let lhs: f64 = pipe
                    .vjp(&base, stage, &u)
                    .unwrap()
                    .iter()
                    .zip(&v)
                    .map(|(g, x)| g * x)
                    .sum();

                let eps = 1e-5;
                let probe = |sign: f64| -> f64 {
                    let data: Vec<f64> = img
                        .data()
                        .iter()
                        .zip(&v)
                        .map(|(x, d)| x + sign * eps * d)
                        .collect();
                    let shifted = RgbImage::from_raw_unchecked(12, 10, data);
                    let outs = pipe.forward_with_median(&shifted, base.median).unwrap();
                    outs.stage_values(stage)
                        .iter()
                        .zip(&u)
                        .map(|(s, uu)| s * uu)
                        .sum()
                };
                let rhs = (probe(1.0) - probe(-1.0)) / (2.0 * eps);
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                assert!(
                    (lhs - rhs).abs() / scale < 1e-8,
                    "{algo} {stage}: lhs {lhs} rhs {rhs}"
                );
            }
        }
    }

    #[test]
    fn raising_the_temperature_polarizes_every_soft_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(413);
        let img = random_image(&mut rng, 24, 24);
        for algo in HashAlgo::ALL {
            let sp = spec(algo, 64);
            let cool = forward_stages(&img, sp, Temperature::new(20.0).unwrap()).unwrap();
            let warm = forward_stages(&img, sp, Temperature::new(80.0).unwrap()).unwrap();
            for (c, w) in cool.soft_bits.iter().zip(&warm.soft_bits) {
                assert!(
                    (w - 0.5).abs() >= (c - 0.5).abs() - 1e-15,
                    "soft bit moved toward 0.5: {c} -> {w}"
                );
            }
        }
    }

    #[test]
    fn pipeline_rejects_mismatched_image_geometry() {
        let pipe = DiffPipeline::new(16, 16, spec(HashAlgo::AHash, 64), tau_default());
        let img = RgbImage::new(8, 8, vec![0.1; 192]).unwrap();
        assert!(matches!(
            pipe.forward(&img),
            Err(DiffError::GeometryMismatch { .. })
        ));
    }
}
