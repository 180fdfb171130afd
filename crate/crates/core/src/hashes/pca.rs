//! PCA-median binarization hash over externally supplied embedding vectors:
//! center, project onto the top principal directions, and set each bit by
//! comparing the projection against a stored per-dimension median.
//!
//! Unlike the image hashes, binarization here uses `>=` (a projection
//! exactly at the median produces a 1 bit).

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::bithash::BitHash;
use super::dct::lower_median;

const MAGIC: &[u8; 4] = b"PCAH";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need more samples than output bits (got {samples} samples for {bits} bits)")]
    TooFewSamples { samples: usize, bits: usize },
    #[error("embedding dimension {dim} is smaller than {bits} output bits")]
    DimTooSmall { dim: usize, bits: usize },
    #[error("unsupported output length {0} (expected 64, 128, or 256)")]
    BadBits(usize),
    #[error("embedding dimension mismatch: model expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("training data is degenerate: principal direction {0} has no variance")]
    Degenerate(usize),
    #[error("inconsistent row lengths in embedding data (row {row} has {got}, expected {expected})")]
    RaggedRows {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model file {path}: {reason}")]
    BadModel { path: String, reason: String },
    #[error("bad embedding csv at line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
}

/// A fitted PCA-median hash model. Component rows are orthonormal and
/// sign-normalized so that each row's largest-magnitude entry is positive,
/// which makes fits reproducible.
#[derive(Debug, Clone)]
pub struct PcaHashModel {
    input_dim: usize,
    out_bits: usize,
    mean: Vec<f64>,
    /// Row-major, `out_bits x input_dim`.
    components: Vec<f64>,
    medians: Vec<f64>,
}

impl PcaHashModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn out_bits(&self) -> usize {
        self.out_bits
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn component_row(&self, k: usize) -> &[f64] {
        &self.components[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    /// Centered projection `components * (e - mean)`.
    pub fn project(&self, embedding: &[f64]) -> Result<Vec<f64>, PcaError> {
        if embedding.len() != self.input_dim {
            return Err(PcaError::DimMismatch {
                expected: self.input_dim,
                got: embedding.len(),
            });
        }
        let centered: Vec<f64> = embedding
            .iter()
            .zip(&self.mean)
            .map(|(e, m)| e - m)
            .collect();
        Ok((0..self.out_bits)
            .map(|k| {
                self.component_row(k)
                    .iter()
                    .zip(&centered)
                    .map(|(c, x)| c * x)
                    .sum()
            })
            .collect())
    }

    /// Flat binary serialization: magic, version, dims, then mean,
    /// components (row-major), and medians as little-endian f64.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), PcaError> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.out_bits as u16).to_le_bytes());
        for v in self.mean.iter().chain(&self.components).chain(&self.medians) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let io_err = |source| PcaError::Io {
            path: path.display().to_string(),
            source,
        };
        let tmp = path.with_extension("pcah.tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(&buf).map_err(io_err)?;
        drop(f);
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, PcaError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| PcaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let bad = |reason: &str| PcaError::BadModel {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        if bytes.len() < 12 || &bytes[0..4] != MAGIC {
            return Err(bad("missing PCAH magic"));
        }
        if u16::from_le_bytes([bytes[4], bytes[5]]) != VERSION {
            return Err(bad("unsupported version"));
        }
        let input_dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let out_bits = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
        let floats = input_dim + out_bits * input_dim + out_bits;
        if bytes.len() != 12 + floats * 8 {
            return Err(bad("truncated model payload"));
        }
        let mut vals = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mean: Vec<f64> = vals.by_ref().take(input_dim).collect();
        let components: Vec<f64> = vals.by_ref().take(out_bits * input_dim).collect();
        let medians: Vec<f64> = vals.collect();
        Ok(Self {
            input_dim,
            out_bits,
            mean,
            components,
            medians,
        })
    }
}

/// Fits a PCA-median hash model: center by the column mean, take the top
/// `out_bits` principal directions by descending eigenvalue, and store the
/// per-dimension lower median of the projected training data.
pub fn pca_fit(embeddings: &[Vec<f64>], out_bits: usize) -> Result<PcaHashModel, PcaError> {
    if !matches!(out_bits, 64 | 128 | 256) {
        return Err(PcaError::BadBits(out_bits));
    }
    fit_unchecked_bits(embeddings, out_bits)
}

/// Same fit without the 64/128/256 restriction; used by tests that want a
/// tiny model to compare against a dense eigensolve.
pub(crate) fn fit_unchecked_bits(
    embeddings: &[Vec<f64>],
    out_bits: usize,
) -> Result<PcaHashModel, PcaError> {
    let n = embeddings.len();
    if n <= out_bits {
        return Err(PcaError::TooFewSamples {
            samples: n,
            bits: out_bits,
        });
    }
    let dim = embeddings[0].len();
    if dim < out_bits {
        return Err(PcaError::DimTooSmall {
            dim,
            bits: out_bits,
        });
    }
    for (row, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(PcaError::RaggedRows {
                row,
                got: e.len(),
                expected: dim,
            });
        }
    }

    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Covariance of the centered data.
    let mut cov = vec![0.0; dim * dim];
    for e in embeddings {
        let centered: Vec<f64> = e.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..dim {
            for j in i..dim {
                cov[i * dim + j] += centered[i] * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            cov[i * dim + j] /= denom;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(&cov, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());

    let scale = eigvals.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut components = Vec::with_capacity(out_bits * dim);
    for (k, &idx) in order.iter().take(out_bits).enumerate() {
        if eigvals[idx] <= 1e-12 * scale {
            return Err(PcaError::Degenerate(k));
        }
        let mut row: Vec<f64> = (0..dim).map(|i| eigvecs[i * dim + idx]).collect();
        // Sign convention: largest-magnitude entry positive.
        let pivot = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if row[pivot] < 0.0 {
            for v in &mut row {
                *v = -*v;
            }
        }
        components.extend_from_slice(&row);
    }

    let model = PcaHashModel {
        input_dim: dim,
        out_bits,
        mean,
        components,
        medians: vec![0.0; out_bits],
    };
    let mut projections = vec![Vec::with_capacity(n); out_bits];
    for e in embeddings {
        let p = model.project(e).expect("dims checked above");
        for (col, v) in projections.iter_mut().zip(p) {
            col.push(v);
        }
    }
    let medians = projections.iter().map(|col| lower_median(col)).collect();
    Ok(PcaHashModel { medians, ..model })
}

/// Hashes an embedding: bit `j` is 1 iff the centered projection along
/// component `j` is `>=` the stored median.
pub fn pca_hash(model: &PcaHashModel, embedding: &[f64]) -> Result<BitHash, PcaError> {
    let p = model.project(embedding)?;
    Ok(BitHash::from_bits(
        &p.iter()
            .zip(&model.medians)
            .map(|(v, m)| v >= m)
            .collect::<Vec<_>>(),
    ))
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues
/// and the eigenvector matrix (columns are eigenvectors).
fn jacobi_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| a[i * n + i]).collect();
    (eigvals, v)
}

/// Reads embeddings from CSV, one comma-separated vector per line. Blank
/// lines are skipped.
pub fn read_embeddings_csv<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<f64>>, PcaError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PcaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                return Err(PcaError::BadCsv {
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(rows)
}
