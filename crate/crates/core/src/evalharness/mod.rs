//! Measurement harness: hash banks with exact nearest-neighbor lookup,
//! augmented top-k baselines, incidental collision rates, precision-
//! calibrated match thresholds, and gray-box transfer matrices built from
//! saved attack artifacts.

pub mod augment;
pub mod bankio;

pub use augment::{augment, default_suite, id_salt, AugKind, AugSpec};
pub use bankio::{load_bank, save_bank};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::attack::report::{read_report, AttackReport};
use crate::hashes::{hamming, hash_image, BitHash, HashSpec};
use crate::imgcore::{load_image, RgbImage};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no decodable images in {0}")]
    EmptyCorpus(String),
    #[error("corpus is missing image {id}: {reason}")]
    MissingImage { id: String, reason: String },
    #[error("invalid augmentation: {0}")]
    BadAugmentation(String),
    #[error("probe has {probe} bits but the bank stores {bank}-bit hashes")]
    BitsMismatch { probe: usize, bank: usize },
    #[error("calibration input invalid: {0}")]
    BadCalibration(&'static str),
    #[error("bad bank file {path}: {reason}")]
    BadBankFile { path: String, reason: String },
    #[error("no threshold provided for {0}")]
    MissingThreshold(String),
    #[error("bad csv {path}: {reason}")]
    BadCsv { path: String, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// An immutable bank of image hashes with ids in deterministic
/// lexicographic order and a packed word array for scanning.
#[derive(Debug, Clone)]
pub struct HashBank {
    spec: HashSpec,
    ids: Vec<String>,
    hashes: Vec<BitHash>,
    packed: Vec<u64>,
    words_per_hash: usize,
}

impl HashBank {
    pub fn from_entries(spec: HashSpec, entries: Vec<(String, BitHash)>) -> Self {
        let words_per_hash = spec.bits().div_ceil(64);
        let mut ids = Vec::with_capacity(entries.len());
        let mut hashes = Vec::with_capacity(entries.len());
        let mut packed = Vec::with_capacity(entries.len() * words_per_hash);
        for (id, h) in entries {
            assert_eq!(h.bits(), spec.bits());
            packed.extend_from_slice(h.words());
            ids.push(id);
            hashes.push(h);
        }
        Self {
            spec,
            ids,
            hashes,
            packed,
            words_per_hash,
        }
    }

    pub fn spec(&self) -> HashSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn hashes(&self) -> &[BitHash] {
        &self.hashes
    }

    pub fn packed_words(&self) -> &[u64] {
        &self.packed
    }

    /// Hamming distance to entry `idx` via the packed scan path.
    fn packed_distance(&self, probe_words: &[u64], idx: usize) -> usize {
        let start = idx * self.words_per_hash;
        self.packed[start..start + self.words_per_hash]
            .iter()
            .zip(probe_words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

/// A file skipped during bank construction, with the reason.
#[derive(Debug, Clone)]
pub struct SkippedFile {
    pub name: String,
    pub reason: String,
}

/// Hashes every decodable image in a directory. Ids are file names, in
/// lexicographic order; undecodable files are skipped and reported.
pub fn build_bank(
    dir: &Path,
    spec: HashSpec,
) -> Result<(HashBank, Vec<SkippedFile>), EvalError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|entry| {
            let entry = entry.ok()?;
            entry
                .file_type()
                .ok()?
                .is_file()
                .then(|| entry.file_name().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();

    let mut entries = Vec::with_capacity(names.len());
    let mut skipped = Vec::new();
    for name in names {
        match load_image(dir.join(&name)) {
            Ok(img) => entries.push((name, hash_image(&img, spec))),
            Err(e) => skipped.push(SkippedFile {
                name,
                reason: e.to_string(),
            }),
        }
    }
    if entries.is_empty() {
        return Err(EvalError::EmptyCorpus(dir.display().to_string()));
    }
    Ok((HashBank::from_entries(spec, entries), skipped))
}

/// One nearest-neighbor hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NnHit {
    pub id: String,
    pub index: usize,
    pub distance: usize,
}

/// Exact linear-scan top-k query over the packed word array. Ties break by
/// entry (id) order. Asking for more hits than the bank holds returns the
/// full ranking.
pub fn nn_query(bank: &HashBank, probe: &BitHash, k: usize) -> Result<Vec<NnHit>, EvalError> {
    if probe.bits() != bank.spec().bits() {
        return Err(EvalError::BitsMismatch {
            probe: probe.bits(),
            bank: bank.spec().bits(),
        });
    }
    assert!(k >= 1);
    let mut ranked: Vec<(usize, usize)> = (0..bank.len())
        .map(|i| (bank.packed_distance(probe.words(), i), i))
        .collect();
    ranked.sort_unstable();
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .map(|(distance, index)| NnHit {
            id: bank.ids[index].clone(),
            index,
            distance,
        })
        .collect())
}

/// One baseline accuracy measurement.
#[derive(Debug, Clone)]
pub struct BaselineRow {
    pub algo: String,
    pub bits: usize,
    pub aug: String,
    pub k: usize,
    pub accuracy: f64,
}

/// Augment-and-requery accuracy: for every bank id, load the image from
/// `corpus_dir`, apply each augmentation, re-hash, and query; a probe is a
/// hit at `k` if its true id appears in the top-k.
pub fn topk_accuracy(
    bank: &HashBank,
    corpus_dir: &Path,
    augs: &[AugSpec],
    ks: &[usize],
) -> Result<Vec<BaselineRow>, EvalError> {
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let mut rows = Vec::new();
    for aug in augs {
        let mut hits = vec![0usize; ks.len()];
        for id in bank.ids() {
            let img = load_image(corpus_dir.join(id)).map_err(|e| EvalError::MissingImage {
                id: id.clone(),
                reason: e.to_string(),
            })?;
            let probe = hash_image(&augment(&img, aug, id_salt(id)), bank.spec());
            let ranking = nn_query(bank, &probe, k_max)?;
            let rank = ranking.iter().position(|hit| &hit.id == id);
            for (slot, &k) in hits.iter_mut().zip(ks) {
                if matches!(rank, Some(r) if r < k) {
                    *slot += 1;
                }
            }
        }
        for (&k, &h) in ks.iter().zip(&hits) {
            rows.push(BaselineRow {
                algo: bank.spec().algo().name().to_string(),
                bits: bank.spec().bits(),
                aug: aug.label(),
                k,
                accuracy: h as f64 / bank.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// Fraction of entries whose hash is shared by at least one other entry.
pub fn collision_rate(bank: &HashBank) -> f64 {
    assert!(bank.len() >= 2, "collision rate needs at least two entries");
    let mut counts: HashMap<&[u64], usize> = HashMap::new();
    for i in 0..bank.len() {
        let words = &bank.packed[i * bank.words_per_hash..(i + 1) * bank.words_per_hash];
        *counts.entry(words).or_insert(0) += 1;
    }
    let colliding: usize = counts.values().filter(|&&c| c >= 2).sum();
    colliding as f64 / bank.len() as f64
}

/// Largest integer threshold `t <= max_distance` such that
/// `|genuine <= t| / (|genuine <= t| + |impostor <= t|)` meets the
/// precision target. Returns `Ok(None)` when no threshold qualifies (the
/// explicit "uncalibratable" outcome).
pub fn calibrate_threshold(
    genuine: &[usize],
    impostor: &[usize],
    precision_target: f64,
    max_distance: usize,
) -> Result<Option<usize>, EvalError> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(EvalError::BadCalibration(
            "both distance lists must be non-empty",
        ));
    }
    if !(precision_target > 0.0 && precision_target <= 1.0) {
        return Err(EvalError::BadCalibration("precision target must be in (0, 1]"));
    }
    // Prefix counts per distance value.
    let mut g_at = vec![0usize; max_distance + 2];
    for &d in genuine {
        g_at[d.min(max_distance + 1)] += 1;
    }
    let mut i_at = vec![0usize; max_distance + 2];
    for &d in impostor {
        i_at[d.min(max_distance + 1)] += 1;
    }
    let mut best = None;
    let (mut g, mut i) = (0usize, 0usize);
    for t in 0..=max_distance {
        g += g_at[t];
        i += i_at[t];
        if g + i == 0 {
            continue;
        }
        if g as f64 / (g + i) as f64 >= precision_target {
            best = Some(t);
        }
    }
    Ok(best)
}

/// Genuine/impostor nearest-neighbor distances for calibration: for each
/// augmented probe, the top-1 distance lands in the genuine list when the
/// neighbor is the probe's own id and in the impostor list otherwise.
pub fn nn_calibration_distances(
    bank: &HashBank,
    corpus_dir: &Path,
    augs: &[AugSpec],
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for aug in augs {
        for id in bank.ids() {
            let img = load_image(corpus_dir.join(id)).map_err(|e| EvalError::MissingImage {
                id: id.clone(),
                reason: e.to_string(),
            })?;
            let probe = hash_image(&augment(&img, aug, id_salt(id)), bank.spec());
            let top = nn_query(bank, &probe, 1)?;
            let hit = &top[0];
            if &hit.id == id {
                genuine.push(hit.distance);
            } else {
                impostor.push(hit.distance);
            }
        }
    }
    Ok((genuine, impostor))
}

/// One cell of the gray-box transfer matrix.
#[derive(Debug, Clone)]
pub struct TransferCell {
    pub attack_algo: String,
    pub attack_bits: usize,
    pub objective: String,
    pub split: String,
    pub eval_algo: String,
    pub eval_bits: usize,
    pub threshold: usize,
    pub success_rate: f64,
    pub n: usize,
}

/// Re-hashes every saved adversarial/target pair referenced by the attack
/// reports in `reports_dir` under each eval spec, and counts a success when
/// the pair lands within that spec's calibrated threshold.
pub fn transfer_matrix(
    reports_dir: &Path,
    eval_specs: &[HashSpec],
    thresholds: &HashMap<String, usize>,
) -> Result<Vec<TransferCell>, EvalError> {
    let mut report_paths: Vec<PathBuf> = fs::read_dir(reports_dir)
        .map_err(|e| io_err(reports_dir, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension().and_then(|e| e.to_str()) == Some("json")).then_some(path)
        })
        .collect();
    report_paths.sort();
    if report_paths.is_empty() {
        return Err(EvalError::EmptyCorpus(reports_dir.display().to_string()));
    }

    for spec in eval_specs {
        if !thresholds.contains_key(&spec.label()) {
            return Err(EvalError::MissingThreshold(spec.label()));
        }
    }

    // (attack key, eval label) -> (successes, total); plus display info.
    struct CellAcc {
        report: AttackReport,
        eval: HashSpec,
        successes: usize,
        total: usize,
    }
    let mut cells: Vec<CellAcc> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();

    for path in &report_paths {
        let report = read_report(path).map_err(|e| io_err(path, e))?;
        let adv = load_referenced_image(reports_dir, &report.adversarial)?;
        let tgt = load_referenced_image(reports_dir, &report.target)?;
        for &eval in eval_specs {
            let d = hamming(&hash_image(&adv, eval), &hash_image(&tgt, eval))
                .expect("same spec on both sides");
            let threshold = thresholds[&eval.label()];
            let key = (report.attack_key(), eval.label());
            let slot = *index.entry(key).or_insert_with(|| {
                cells.push(CellAcc {
                    report: report.clone(),
                    eval,
                    successes: 0,
                    total: 0,
                });
                cells.len() - 1
            });
            cells[slot].total += 1;
            if d <= threshold {
                cells[slot].successes += 1;
            }
        }
    }

    Ok(cells
        .into_iter()
        .map(|c| TransferCell {
            attack_algo: c.report.algo.clone(),
            attack_bits: c.report.bits,
            objective: c.report.objective.clone(),
            split: c.report.splits.join("+"),
            eval_algo: c.eval.algo().name().to_string(),
            eval_bits: c.eval.bits(),
            threshold: thresholds[&c.eval.label()],
            success_rate: c.successes as f64 / c.total as f64,
            n: c.total,
        })
        .collect())
}

fn load_referenced_image(base: &Path, reference: &str) -> Result<RgbImage, EvalError> {
    let direct = PathBuf::from(reference);
    let path = if direct.is_absolute() || direct.exists() {
        direct
    } else {
        base.join(reference)
    };
    load_image(&path).map_err(|e| EvalError::MissingImage {
        id: reference.to_string(),
        reason: e.to_string(),
    })
}

fn atomic_write(path: &Path, text: &str) -> Result<(), EvalError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_baselines_csv(path: &Path, rows: &[BaselineRow]) -> Result<(), EvalError> {
    let mut out = String::from("algo,bits,aug,k,accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.algo, r.bits, r.aug, r.k, r.accuracy
        ));
    }
    atomic_write(path, &out)
}

pub fn write_collisions_csv(
    path: &Path,
    rows: &[(String, usize, f64)],
) -> Result<(), EvalError> {
    let mut out = String::from("algo,bits,rate\n");
    for (algo, bits, rate) in rows {
        out.push_str(&format!("{algo},{bits},{rate}\n"));
    }
    atomic_write(path, &out)
}

pub fn write_calibration_csv(
    path: &Path,
    rows: &[(HashSpec, f64, usize)],
) -> Result<(), EvalError> {
    let mut out = String::from("algo,bits,precision,threshold\n");
    for (spec, precision, threshold) in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            spec.algo().name(),
            spec.bits(),
            precision,
            threshold
        ));
    }
    atomic_write(path, &out)
}

/// Reads a calibration CSV back into a `label -> threshold` map.
pub fn read_calibration_csv(path: &Path) -> Result<HashMap<String, usize>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |reason: &str| EvalError::BadCsv {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(&format!("line {} has {} fields", i + 1, fields.len())));
        }
        let bits: usize = fields[1].parse().map_err(|_| bad("bad bits field"))?;
        let threshold: usize = fields[3].parse().map_err(|_| bad("bad threshold field"))?;
        map.insert(format!("{}_{}", fields[0], bits), threshold);
    }
    Ok(map)
}

pub fn write_transfer_csv(path: &Path, cells: &[TransferCell]) -> Result<(), EvalError> {
    let mut out =
        String::from("attack_algo,attack_bits,objective,split,eval_algo,eval_bits,threshold,success_rate,n\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.attack_algo,
            c.attack_bits,
            c.objective,
            c.split,
            c.eval_algo,
            c.eval_bits,
            c.threshold,
            c.success_rate,
            c.n
        ));
    }
    atomic_write(path, &out)
}
