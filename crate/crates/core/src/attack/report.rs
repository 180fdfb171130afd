//! Attack report files: one JSON document per run carrying the effective
//! configuration and outcome, plus an optional per-iteration trace CSV
//! (`iter,loss,hamming`). The transfer harness re-reads these reports to
//! locate the saved adversarial/target image pairs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttackConfig, AttackResult, TracePoint};
use crate::hashes::HashSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    pub source: String,
    pub target: String,
    /// Path of the adversarial image written by this run.
    pub adversarial: String,
    pub algo: String,
    pub bits: usize,
    pub objective: String,
    pub splits: Vec<String>,
    pub lr: f64,
    pub c: f64,
    pub delta: f64,
    pub tau: f64,
    pub d: usize,
    pub max_iters: usize,
    pub seed: u64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    pub iters: usize,
    pub success_float: bool,
    pub success_quantized: bool,
    pub final_hamming: usize,
    /// Per-pixel RMS of the perturbation.
    pub r_l2: f64,
    pub r_linf: f64,
    pub ssim: f64,
}

impl AttackReport {
    pub fn new(
        source: &str,
        target: &str,
        adversarial: &str,
        spec: HashSpec,
        cfg: &AttackConfig,
        result: &AttackResult,
    ) -> Self {
        Self {
            source: source.to_string(),
            target: target.to_string(),
            adversarial: adversarial.to_string(),
            algo: spec.algo().name().to_string(),
            bits: spec.bits(),
            objective: cfg.objective.name().to_string(),
            splits: cfg.objective.split_names(),
            lr: cfg.lr,
            c: cfg.content_weight,
            delta: cfg.hinge_margin,
            tau: cfg.tau.value(),
            d: cfg.success_distance,
            max_iters: cfg.max_iters,
            seed: cfg.seed,
            adam_eps: cfg.adam_eps,
            iters: result.iters,
            success_float: result.success_float,
            success_quantized: result.success_quantized,
            final_hamming: result.final_hamming,
            r_l2: result.r_l2,
            r_linf: result.r_linf,
            ssim: result.ssim,
        }
    }

    /// Grouping key for transfer aggregation.
    pub fn attack_key(&self) -> String {
        if self.splits.is_empty() {
            format!("{}_{}:{}", self.algo, self.bits, self.objective)
        } else {
            format!(
                "{}_{}:{}:{}",
                self.algo,
                self.bits,
                self.objective,
                self.splits.join("+")
            )
        }
    }
}

fn default_adam_eps() -> f64 {
    1e-2
}

fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn write_report<P: AsRef<Path>>(path: P, report: &AttackReport) -> std::io::Result<()> {
    let json = serde_json::to_vec_pretty(report).expect("report serializes");
    atomic_write(path.as_ref(), &json)
}

pub fn read_report<P: AsRef<Path>>(path: P) -> std::io::Result<AttackReport> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn write_trace_csv<P: AsRef<Path>>(path: P, trace: &[TracePoint]) -> std::io::Result<()> {
    let mut out = String::from("iter,loss,hamming\n");
    for p in trace {
        out.push_str(&format!("{},{},{}\n", p.iter, p.loss, p.hamming));
    }
    atomic_write(path.as_ref(), out.as_bytes())
}
