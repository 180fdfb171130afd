//! Collision-attack optimizer: given a source and a target image, perturb
//! the source until its hash (or an interior pipeline stage) matches the
//! target's, keeping the perturbation small and the image inside `[0, 1]`.
//!
//! The constrained problem is handled as penalty plus projection: a content
//! term `c * ||r||^2` joins the collision objective, and iterates are
//! clamped to the box after every optimizer step. Success is checked
//! against the HARD hash every iteration; the soft pipeline exists only to
//! supply gradients, so a success at distance 0 is a true exact collision.

pub mod adam;
pub mod report;
pub mod ssim;

pub use report::{read_report, write_report, write_trace_csv, AttackReport};
pub use ssim::ssim;

use thiserror::Error;

use crate::diffpipe::{DiffPipeline, Stage, StageOutputs, Temperature};
use crate::hashes::{hamming, hash_image, BitHash, HashSpec};
use crate::imgcore::{to_luma, RgbImage};
use adam::Adam;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("invalid attack configuration: {0}")]
    BadConfig(String),
    #[error("stage {0} is not a valid interior split (use p1, p2, or p3)")]
    BadSplit(Stage),
    #[error(transparent)]
    Pipeline(#[from] crate::diffpipe::DiffError),
}

/// What the optimizer drives toward the target.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Squared L2 between the soft bits of the attack image and the hard
    /// bits of the target.
    HashL2,
    /// Per-bit hinge: zero once each soft bit is within the margin of the
    /// target bit, so logits are pushed just past the binarization
    /// boundary and no further.
    Hinge,
    /// Squared L2 between interior stage tensors (the split points).
    Interior(Vec<Stage>),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::HashL2 => "hash-l2",
            Objective::Hinge => "hinge",
            Objective::Interior(_) => "interior",
        }
    }

    pub fn split_names(&self) -> Vec<String> {
        match self {
            Objective::Interior(stages) => stages.iter().map(|s| s.name().to_string()).collect(),
            _ => Vec::new(),
        }
    }
}

/// Attack hyperparameters. The defaults are the tuned white-box settings:
/// Adam betas (0.1, 0.1), learning rate 5.0 expressed in 8-bit intensity
/// levels (the optimizer applies `lr / 255` in the unit pixel domain),
/// content weight 0.001, hinge margin 0.45, and exact collisions (`d = 0`).
///
/// With betas this short, Adam behaves like sign descent, so two settings
/// control the endgame: the attack defaults to temperature 20 (satisfied
/// bits sit `ln(0.55/0.45)/20 ~ 0.01` past the threshold, deep enough not
/// to be knocked back while the remaining bits converge) and an Adam
/// epsilon of 1e-2 (sub-epsilon gradients, like the content pull toward
/// the source, step proportionally instead of at full speed).
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub objective: Objective,
    /// Learning rate in 8-bit intensity levels per step.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the `||r||^2` content term.
    pub content_weight: f64,
    /// Hinge margin; must lie in (0, 0.5).
    pub hinge_margin: f64,
    pub tau: Temperature,
    /// Hamming distance at or below which the attack counts as a success.
    pub success_distance: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Adam epsilon. Gradients below this scale step proportionally
    /// instead of at full sign speed, which keeps already-satisfied bits
    /// from thrashing while the rest converge.
    pub adam_eps: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Hinge,
            lr: 5.0,
            beta1: 0.1,
            beta2: 0.1,
            content_weight: 0.001,
            hinge_margin: 0.45,
            tau: Temperature::new(20.0).expect("positive"),
            success_distance: 0,
            max_iters: 2000,
            seed: 0,
            adam_eps: 1e-2,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(AttackError::BadConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.content_weight.is_nan() || self.content_weight < 0.0 {
            return Err(AttackError::BadConfig(format!(
                "content weight must be nonnegative, got {}",
                self.content_weight
            )));
        }
        if !(self.hinge_margin > 0.0 && self.hinge_margin < 0.5) {
            return Err(AttackError::BadConfig(format!(
                "hinge margin must lie in (0, 0.5), got {}",
                self.hinge_margin
            )));
        }
        if let Objective::Interior(stages) = &self.objective {
            if stages.is_empty() {
                return Err(AttackError::BadConfig(
                    "interior objective needs at least one split".into(),
                ));
            }
            for &st in stages {
                if st == Stage::SoftBits {
                    return Err(AttackError::BadSplit(st));
                }
            }
        }
        Ok(())
    }
}

/// Target-side context, hashed through the target's own pipeline (source
/// and target resolutions may differ; each gets its own resize).
pub struct AttackTarget {
    pub bits: BitHash,
    pub stages: StageOutputs,
}

impl AttackTarget {
    pub fn from_image(
        target: &RgbImage,
        spec: HashSpec,
        tau: Temperature,
    ) -> Result<Self, AttackError> {
        let pipe = DiffPipeline::new(target.height(), target.width(), spec, tau);
        let stages = pipe.forward(target)?;
        Ok(Self {
            bits: hash_image(target, spec),
            stages,
        })
    }
}

/// One point on the loss trace, recorded per optimizer step.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iter: usize,
    pub loss: f64,
    pub hamming: usize,
}

/// The outcome of one attack run; failure to collide is a state, not an
/// error.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub adversarial: RgbImage,
    /// Per-pixel RMS of the perturbation, `sqrt(mean((adv - src)^2))` over
    /// all RGB samples.
    pub r_l2: f64,
    pub r_linf: f64,
    /// Optimizer steps taken before stopping.
    pub iters: usize,
    pub success_float: bool,
    /// Whether the collision survives rounding the image to 8 bits.
    pub success_quantized: bool,
    pub final_hamming: usize,
    pub ssim: f64,
    pub loss_trace: Vec<TracePoint>,
}

fn content_term(adv: &RgbImage, src: &RgbImage, weight: f64, grad: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    for (i, (a, s)) in adv.data().iter().zip(src.data()).enumerate() {
        let r = a - s;
        loss += r * r;
        grad[i] += 2.0 * weight * r;
    }
    weight * loss
}

/// `||soft_bits(x) - hard_bits(y)||^2 + c * ||r||^2` and its gradient.
pub fn objective_hash_l2(
    pipe: &DiffPipeline,
    outputs: &StageOutputs,
    adv: &RgbImage,
    src: &RgbImage,
    target: &AttackTarget,
    content_weight: f64,
) -> Result<(f64, Vec<f64>), AttackError> {
    let mut loss = 0.0;
    let mut upstream = Vec::with_capacity(outputs.soft_bits.len());
    for (j, &sb) in outputs.soft_bits.iter().enumerate() {
        let t = if target.bits.bit(j) { 1.0 } else { 0.0 };
        let e = sb - t;
        loss += e * e;
        upstream.push(2.0 * e);
    }
    let mut grad = pipe.vjp(outputs, Stage::SoftBits, &upstream)?;
    loss += content_term(adv, src, content_weight, &mut grad);
    Ok((loss, grad))
}

/// Per-bit hinge terms `max(0, |h_j(y) - soft_j(x)| - margin)`; the
/// subgradient is zero inside the margin.
pub fn hinge_terms(target: &BitHash, soft_bits: &[f64], margin: f64) -> Vec<f64> {
    soft_bits
        .iter()
        .enumerate()
        .map(|(j, &sb)| {
            let t = if target.bit(j) { 1.0 } else { 0.0 };
            ((t - sb).abs() - margin).max(0.0)
        })
        .collect()
}

/// Hinge objective plus content term, with its (sub)gradient.
pub fn objective_hinge(
    pipe: &DiffPipeline,
    outputs: &StageOutputs,
    adv: &RgbImage,
    src: &RgbImage,
    target: &AttackTarget,
    margin: f64,
    content_weight: f64,
) -> Result<(f64, Vec<f64>), AttackError> {
    let terms = hinge_terms(&target.bits, &outputs.soft_bits, margin);
    let loss: f64 = terms.iter().sum();
    let upstream: Vec<f64> = terms
        .iter()
        .enumerate()
        .map(|(j, &term)| {
            if term > 0.0 {
                // d|t - s|/ds = -1 toward a 1 bit, +1 toward a 0 bit.
                if target.bits.bit(j) {
                    -1.0
                } else {
                    1.0
                }
            } else {
                0.0
            }
        })
        .collect();
    let mut grad = pipe.vjp(outputs, Stage::SoftBits, &upstream)?;
    let total = loss + content_term(adv, src, content_weight, &mut grad);
    Ok((total, grad))
}

/// `sum_i ||stage_i(x) - stage_i(y)||^2 + c * ||r||^2` over the chosen
/// interior splits.
pub fn objective_interior(
    pipe: &DiffPipeline,
    outputs: &StageOutputs,
    adv: &RgbImage,
    src: &RgbImage,
    target: &AttackTarget,
    splits: &[Stage],
    content_weight: f64,
) -> Result<(f64, Vec<f64>), AttackError> {
    if splits.is_empty() {
        return Err(AttackError::BadConfig(
            "interior objective needs at least one split".into(),
        ));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; adv.data().len()];
    for &stage in splits {
        if stage == Stage::SoftBits {
            return Err(AttackError::BadSplit(stage));
        }
        let here = outputs.stage_values(stage);
        let there = target.stages.stage_values(stage);
        debug_assert_eq!(here.len(), there.len());
        let mut upstream = Vec::with_capacity(here.len());
        for (a, b) in here.iter().zip(there) {
            let e = a - b;
            loss += e * e;
            upstream.push(2.0 * e);
        }
        for (g, d) in grad.iter_mut().zip(pipe.vjp(outputs, stage, &upstream)?) {
            *g += d;
        }
    }
    loss += content_term(adv, src, content_weight, &mut grad);
    Ok((loss, grad))
}

/// Runs the Adam collision attack. Stops at the first iteration whose hard
/// hash lies within `success_distance` of the target's, or after
/// `max_iters` steps.
pub fn run_attack(
    source: &RgbImage,
    target: &RgbImage,
    spec: HashSpec,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    cfg.validate()?;
    let pipe = DiffPipeline::new(source.height(), source.width(), spec, cfg.tau);
    let target_ctx = AttackTarget::from_image(target, spec, cfg.tau)?;

    let mut adv = source.clone();
    // The paper-scale learning rate counts 8-bit intensity levels; the
    // pixel domain here is [0, 1].
    let mut opt = Adam::with_eps(
        adv.data().len(),
        cfg.lr / 255.0,
        cfg.beta1,
        cfg.beta2,
        cfg.adam_eps,
    );
    let mut trace = Vec::new();
    let mut steps = 0;

    loop {
        let outputs = pipe.forward(&adv)?;
        let ham = hamming(&outputs.hard_bits(), &target_ctx.bits)
            .expect("pipeline and target share the spec");
        if ham <= cfg.success_distance || steps == cfg.max_iters {
            break;
        }
        let (loss, grad) = match &cfg.objective {
            Objective::HashL2 => {
                objective_hash_l2(&pipe, &outputs, &adv, source, &target_ctx, cfg.content_weight)?
            }
            Objective::Hinge => objective_hinge(
                &pipe,
                &outputs,
                &adv,
                source,
                &target_ctx,
                cfg.hinge_margin,
                cfg.content_weight,
            )?,
            Objective::Interior(splits) => objective_interior(
                &pipe,
                &outputs,
                &adv,
                source,
                &target_ctx,
                splits,
                cfg.content_weight,
            )?,
        };
        trace.push(TracePoint {
            iter: steps,
            loss,
            hamming: ham,
        });
        opt.update(adv.data_mut(), &grad);
        for v in adv.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        debug_assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        steps += 1;
    }

    Ok(finish_attack(source, adv, target, spec, cfg, steps, trace))
}

/// Shared result assembly: re-verifies the collision from the hard hash
/// path and computes the reporting metrics.
fn finish_attack(
    source: &RgbImage,
    adv: RgbImage,
    target: &RgbImage,
    spec: HashSpec,
    cfg: &AttackConfig,
    iters: usize,
    trace: Vec<TracePoint>,
) -> AttackResult {
    let target_hash = hash_image(target, spec);
    let final_hamming =
        hamming(&hash_image(&adv, spec), &target_hash).expect("specs match by construction");
    let success_float = final_hamming <= cfg.success_distance;

    let quantized = quantize8(&adv);
    let qham = hamming(&hash_image(&quantized, spec), &target_hash).expect("specs match");
    let success_quantized = qham <= cfg.success_distance;

    let n = adv.data().len() as f64;
    let mut sum_sq = 0.0;
    let mut linf: f64 = 0.0;
    for (a, s) in adv.data().iter().zip(source.data()) {
        let r = a - s;
        sum_sq += r * r;
        linf = linf.max(r.abs());
    }
    let ssim_value = ssim(&to_luma(source), &to_luma(&adv)).expect("same geometry");

    AttackResult {
        adversarial: adv,
        r_l2: (sum_sq / n).sqrt(),
        r_linf: linf,
        iters,
        success_float,
        success_quantized,
        final_hamming,
        ssim: ssim_value,
        loss_trace: trace,
    }
}

/// Rounds every sample to the nearest 8-bit level.
pub fn quantize8(img: &RgbImage) -> RgbImage {
    let data = img
        .data()
        .iter()
        .map(|&v| (v * 255.0).round() / 255.0)
        .collect();
    RgbImage::new(img.height(), img.width(), data).expect("rounding stays in the box")
}

/// Options for the exact resize-stage preimage attack.
#[derive(Debug, Clone)]
pub struct PreimageOptions {
    /// Max-abs residual on the resized grid at which the solve stops.
    pub tolerance: f64,
    /// Outer solve/clamp rounds.
    pub max_rounds: usize,
    /// Conjugate-gradient iteration cap per round.
    pub cg_iters: usize,
    pub tau: Temperature,
    /// Success distance for the reported collision verdicts.
    pub success_distance: usize,
}

impl Default for PreimageOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_rounds: 25,
            cg_iters: 2000,
            tau: Temperature::default(),
            success_distance: 0,
        }
    }
}

/// Drives the source image's resized luma grid to exactly match the
/// target's (the sharpest interior attack: the whole front half of the
/// pipeline is linear, so the minimum-norm correction is solved with
/// conjugate gradients on the normal equations, re-projecting into the
/// pixel box between rounds). Everything downstream of the grid is
/// deterministic, so grid equality cascades to an exact hash collision for
/// every algorithm that shares the grid geometry.
///
/// Returns the result plus the achieved max-abs grid residual.
pub fn grid_preimage_attack(
    source: &RgbImage,
    target: &RgbImage,
    spec: HashSpec,
    opts: &PreimageOptions,
) -> Result<(AttackResult, f64), AttackError> {
    let pipe = DiffPipeline::new(source.height(), source.width(), spec, opts.tau);
    let target_pipe = DiffPipeline::new(target.height(), target.width(), spec, opts.tau);
    let goal = target_pipe.forward(target)?.grid.data().to_vec();

    let mut x = source.data().to_vec();
    let mut trace = Vec::new();
    let mut total_cg = 0usize;
    let mut residual_inf = f64::INFINITY;

    for round in 0..opts.max_rounds {
        let grid = pipe.grid_of_raw(&x);
        let residual: Vec<f64> = goal.iter().zip(&grid).map(|(g, v)| g - v).collect();
        residual_inf = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        trace.push(TracePoint {
            iter: round,
            loss: residual.iter().map(|v| v * v).sum(),
            hamming: 0,
        });
        if residual_inf <= opts.tolerance {
            break;
        }
        // Solve A A^T lambda = residual, then correct x by A^T lambda (the
        // least-norm update in pixel space).
        let gram = |lambda: &[f64]| pipe.grid_of_raw(&pipe.grid_vjp_raw(lambda));
        let (lambda, used) = cg_solve(gram, &residual, opts.cg_iters, opts.tolerance * 1e-2);
        total_cg += used;
        for (xi, d) in x.iter_mut().zip(pipe.grid_vjp_raw(&lambda)) {
            *xi = (*xi + d).clamp(0.0, 1.0);
        }
    }

    let adv = RgbImage::new(source.height(), source.width(), x).expect("clamped into the box");
    let cfg = AttackConfig {
        objective: Objective::Interior(vec![Stage::ResizedGrid]),
        success_distance: opts.success_distance,
        tau: opts.tau,
        ..AttackConfig::default()
    };
    Ok((
        finish_attack(source, adv, target, spec, &cfg, total_cg, trace),
        residual_inf,
    ))
}

/// Conjugate gradients for a symmetric positive semidefinite operator.
/// Returns the solution and the number of iterations used.
fn cg_solve<F>(apply: F, b: &[f64], max_iters: usize, tol: f64) -> (Vec<f64>, usize)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let tol_sq = tol * tol;
    let mut used = 0;
    for _ in 0..max_iters {
        if rs <= tol_sq {
            break;
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break; // numerically singular direction
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        used += 1;
    }
    (x, used)
}
