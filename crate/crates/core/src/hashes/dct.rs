//! Orthonormal 2-D DCT-II over square matrices, with its exact adjoint.

/// Precomputed orthonormal DCT-II basis for size `n`:
/// `D[k][i] = a(k) * cos(pi * (2i + 1) * k / (2n))` with `a(0) = sqrt(1/n)`
/// and `a(k>0) = sqrt(2/n)`.
#[derive(Debug, Clone)]
pub struct DctMatrix {
    n: usize,
    basis: Vec<f64>,
}

impl DctMatrix {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut basis = vec![0.0; n * n];
        let norm0 = (1.0 / n as f64).sqrt();
        let norm = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let a = if k == 0 { norm0 } else { norm };
            for i in 0..n {
                basis[k * n + i] =
                    a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64)
                        .cos();
            }
        }
        Self { n, basis }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// Forward transform `D * M * D^T`.
    ///
    /// Computed by splitting off the input mean: the residual goes through
    /// the basis sandwich and the mean's analytically known contribution
    /// (`n * mean` at DC, zero elsewhere) is added back. Algebraically
    /// identical, but a constant input produces exactly one nonzero
    /// coefficient instead of ~1e-16 residue across the spectrum.
    pub fn forward(&self, mat: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(mat.len(), n * n);
        let base = mat[0];
        let mean = base + mat.iter().map(|v| v - base).sum::<f64>() / mat.len() as f64;
        let residual: Vec<f64> = mat.iter().map(|v| v - mean).collect();
        let mut out = self.sandwich(&residual, false);
        out[0] += n as f64 * mean;
        out
    }

    /// Adjoint of the forward transform, `D^T * G * D`. Because `D` is
    /// orthonormal this is also the inverse transform.
    pub fn adjoint(&self, grad: &[f64]) -> Vec<f64> {
        self.sandwich(grad, true)
    }

    fn sandwich(&self, mat: &[f64], transposed: bool) -> Vec<f64> {
        let n = self.n;
        assert_eq!(mat.len(), n * n);
        let d = |r: usize, c: usize| {
            if transposed {
                self.basis[c * n + r]
            } else {
                self.basis[r * n + c]
            }
        };
        // tmp = D * M
        let mut tmp = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                tmp[r * n + c] = (0..n).map(|k| d(r, k) * mat[k * n + c]).sum();
            }
        }
        // out = tmp * D^T
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = (0..n).map(|k| tmp[r * n + k] * d(c, k)).sum();
            }
        }
        out
    }
}

/// One-shot orthonormal 2-D DCT-II of an `n x n` row-major matrix.
pub fn dct2(mat: &[f64], n: usize) -> Vec<f64> {
    DctMatrix::new(n).forward(mat)
}

/// Lower median: the element at index `(len - 1) / 2` of the sorted values.
/// For odd lengths this is the ordinary median.
pub fn lower_median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median over finite values"));
    sorted[(sorted.len() - 1) / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(N^4) direct-summation oracle straight from the basis formula.
    fn dct2_direct(mat: &[f64], n: usize) -> Vec<f64> {
        let alpha = |k: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += mat[i * n + j]
                            * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64
                                / (2 * n) as f64)
                                .cos()
                            * (std::f64::consts::PI * (2 * j + 1) as f64 * v as f64
                                / (2 * n) as f64)
                                .cos();
                    }
                }
                out[u * n + v] = alpha(u) * alpha(v) * acc;
            }
        }
        out
    }

    #[test]
    fn constant_matrix_has_only_a_dc_coefficient() {
        let c = 0.7;
        let out = dct2(&[c; 4], 2);
        assert!((out[0] - 2.0 * c).abs() < 1e-12);
        for &v in &out[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn dct_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let a: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let da = dct2(&a, n);
        let db = dct2(&b, n);
        let ds = dct2(&sum, n);
        for i in 0..n * n {
            assert!((ds[i] - da[i] - db[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn impulse_matches_direct_summation_oracle() {
        let mat = [1.0, 0.0, 0.0, 0.0];
        let fast = dct2(&mat, 2);
        let slow = dct2_direct(&mat, 2);
        for i in 0..4 {
            assert!((fast[i] - slow[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_matrices_match_direct_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3usize, 8, 12] {
            let mat: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = dct2(&mat, n);
            let slow = dct2_direct(&mat, n);
            for i in 0..n * n {
                assert!((fast[i] - slow[i]).abs() < 1e-10, "n={n} idx={i}");
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_for_hash_sizes() {
        for n in [8usize, 12, 16, 24, 32] {
            let d = DctMatrix::new(n);
            for r in 0..n {
                for c in 0..n {
                    let dot: f64 = (0..n)
                        .map(|k| d.basis()[r * n + k] * d.basis()[c * n + k])
                        .sum();
                    let expect = if r == c { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10, "n={n} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn transform_preserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 16;
        let mat: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = dct2(&mat, n);
        let e_in: f64 = mat.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e_out: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((e_in - e_out).abs() < 1e-9);
    }

    #[test]
    fn adjoint_is_the_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 5;
        let d = DctMatrix::new(n);
        let x: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fx = d.forward(&x);
        let au = d.adjoint(&u);
        let lhs: f64 = fx.iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&au).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn lower_median_picks_the_lower_of_the_middle_pair() {
        assert_eq!(lower_median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&[5.0]), 5.0);
    }
}
