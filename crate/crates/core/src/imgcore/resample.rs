//! Lanczos-3 resampling as an explicit sparse linear operator, so the
//! backward pass is the exact transpose of the forward pass.
//!
//! Conventions (hashes are sensitive to these, so they are pinned):
//! pixel centers sit at `i + 0.5`; when downscaling by `f = in/out > 1`
//! the kernel is stretched by `f` (anti-aliasing) and the support radius
//! becomes `3 * f`; out-of-range source indices clamp to the nearest edge
//! pixel; every output row is normalized to sum to one.

use super::GrayImage;

/// Lanczos-3 kernel `sinc(t) * sinc(t / 3)` for `|t| < 3`, else 0.
///
/// Nonzero integer offsets are exact kernel zeros; returning a true 0.0
/// there (instead of the ~1e-16 residue of `sin(pi * t)`) keeps equal-size
/// operators exactly the identity.
pub fn lanczos3(t: f64) -> f64 {
    let t = t.abs();
    if t >= 3.0 {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    if t == t.trunc() {
        return 0.0;
    }
    let pt = std::f64::consts::PI * t;
    (pt.sin() / pt) * ((pt / 3.0).sin() / (pt / 3.0))
}

/// One-dimensional resampling operator from `in_len` samples to `out_len`.
#[derive(Debug, Clone)]
pub struct ResampleOperator {
    in_len: usize,
    out_len: usize,
    /// Per-output-pixel sparse weights as (source index, weight), with the
    /// source indices strictly increasing within each row.
    rows: Vec<Vec<(usize, f64)>>,
    /// Largest-weight source index of each row. Evaluating a row as
    /// `x[a] + sum w * (x - x[a])` makes constant inputs map to exactly the
    /// same constant, which the strict hash tie rules depend on.
    anchors: Vec<usize>,
}

/// Builds the Lanczos-3 operator mapping `in_len` source pixels to
/// `out_len` output pixels.
pub fn build_resample_operator(in_len: usize, out_len: usize) -> ResampleOperator {
    assert!(in_len >= 1 && out_len >= 1);
    let scale = in_len as f64 / out_len as f64;
    let stretch = scale.max(1.0);
    let radius = 3.0 * stretch;
    let mut rows = Vec::with_capacity(out_len);
    let mut anchors = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = (i as f64 + 0.5) * scale;
        let lo = (center - radius - 0.5).ceil() as i64;
        let hi = (center + radius - 0.5).floor() as i64;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
        let mut total = 0.0;
        for j in lo..=hi {
            let w = lanczos3((j as f64 + 0.5 - center) / stretch);
            if w == 0.0 {
                continue;
            }
            total += w;
            let idx = j.clamp(0, in_len as i64 - 1) as usize;
            match row.last_mut() {
                // Edge clamping folds out-of-range taps onto the edge pixel.
                Some(last) if last.0 == idx => last.1 += w,
                _ => row.push((idx, w)),
            }
        }
        for entry in &mut row {
            entry.1 /= total;
        }
        let anchor = row
            .iter()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|&(j, _)| j)
            .expect("kernel support is never empty");
        rows.push(row);
        anchors.push(anchor);
    }
    ResampleOperator {
        in_len,
        out_len,
        rows,
        anchors,
    }
}

impl ResampleOperator {
    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Applies the operator to a source vector.
    pub fn apply(&self, src: &[f64], dst: &mut [f64]) {
        debug_assert_eq!(src.len(), self.in_len);
        debug_assert_eq!(dst.len(), self.out_len);
        for ((out, row), &a) in dst.iter_mut().zip(&self.rows).zip(&self.anchors) {
            let base = src[a];
            *out = base + row.iter().map(|&(j, w)| w * (src[j] - base)).sum::<f64>();
        }
    }

    /// Applies the transpose: scatters an output-sized vector back to
    /// source size. `dst` must be zero-initialized by the caller if a pure
    /// transpose product is wanted; contributions are accumulated.
    pub fn apply_transpose(&self, upstream: &[f64], dst: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.out_len);
        debug_assert_eq!(dst.len(), self.in_len);
        for (u, row) in upstream.iter().zip(&self.rows) {
            for &(j, w) in row {
                dst[j] += w * u;
            }
        }
    }
}

/// Separable resize: the horizontal operator applied to every row, then the
/// vertical operator to every column. Equals the dense matrix product
/// `R_v * X * R_h^T`.
pub fn lanczos_resize(img: &GrayImage, out_h: usize, out_w: usize) -> GrayImage {
    let row_op = build_resample_operator(img.width(), out_w);
    let col_op = build_resample_operator(img.height(), out_h);
    apply_separable(&col_op, &row_op, img)
}

/// Applies prebuilt vertical/horizontal operators. Exposed so callers that
/// resize many images of the same geometry can reuse the operators and get
/// bit-identical results to [`lanczos_resize`].
pub fn apply_separable(
    col_op: &ResampleOperator,
    row_op: &ResampleOperator,
    img: &GrayImage,
) -> GrayImage {
    let (in_h, in_w) = (img.height(), img.width());
    let (out_h, out_w) = (col_op.out_len(), row_op.out_len());
    assert_eq!(col_op.in_len(), in_h);
    assert_eq!(row_op.in_len(), in_w);

    // Horizontal pass.
    let mut tmp = vec![0.0; in_h * out_w];
    for r in 0..in_h {
        let src = &img.data()[r * in_w..(r + 1) * in_w];
        row_op.apply(src, &mut tmp[r * out_w..(r + 1) * out_w]);
    }
    // Vertical pass.
    let mut out = vec![0.0; out_h * out_w];
    let mut col_src = vec![0.0; in_h];
    let mut col_dst = vec![0.0; out_h];
    for c in 0..out_w {
        for r in 0..in_h {
            col_src[r] = tmp[r * out_w + c];
        }
        col_op.apply(&col_src, &mut col_dst);
        for r in 0..out_h {
            out[r * out_w + c] = col_dst[r];
        }
    }
    GrayImage::new(out_h, out_w, out).expect("resize output dims are nonzero")
}

/// Transpose of [`apply_separable`]: pulls a gradient at the resized
/// geometry back to source geometry, `R_v^T * G * R_h`.
pub fn apply_separable_transpose(
    col_op: &ResampleOperator,
    row_op: &ResampleOperator,
    upstream: &GrayImage,
) -> GrayImage {
    let (in_h, in_w) = (col_op.in_len(), row_op.in_len());
    let (out_h, out_w) = (col_op.out_len(), row_op.out_len());
    assert_eq!(upstream.height(), out_h);
    assert_eq!(upstream.width(), out_w);

    // Vertical transpose pass.
    let mut tmp = vec![0.0; in_h * out_w];
    let mut col_up = vec![0.0; out_h];
    let mut col_dst = vec![0.0; in_h];
    for c in 0..out_w {
        for (r, up) in col_up.iter_mut().enumerate() {
            *up = upstream.data()[r * out_w + c];
        }
        col_dst.fill(0.0);
        col_op.apply_transpose(&col_up, &mut col_dst);
        for (r, v) in col_dst.iter().enumerate() {
            tmp[r * out_w + c] = *v;
        }
    }
    // Horizontal transpose pass.
    let mut out = vec![0.0; in_h * in_w];
    for r in 0..in_h {
        let up = &tmp[r * out_w..(r + 1) * out_w];
        row_op.apply_transpose(up, &mut out[r * in_w..(r + 1) * in_w]);
    }
    GrayImage::new(in_h, in_w, out).expect("source dims are nonzero")
}
