//! Pairwise frame dot products.
//!
//! Every dot product accumulates `f32 * f32` products in `f64` over
//! [`LANES`] interleaved partial sums (element `k` goes to lane `k % LANES`)
//! and reduces the lanes pairwise in a fixed tree. The blocked kernel below
//! computes four dot products at a time using exactly that per-element
//! schedule, so blocked, unblocked and SIMD-dispatched paths agree bit for bit.

use crate::corpus::EmbeddingSequence;
use crate::matrix::Matrix;

use super::MetricError;

pub const LANES: usize = 8;

/// `T_x x T_y` matrix of dot products between unit frames.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Matrix);

impl GramMatrix {
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn transpose(&self) -> GramMatrix {
        GramMatrix(self.0.transpose())
    }
}

#[inline(always)]
fn reduce(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Reference dot product defining the accumulation schedule.
pub fn dot(x: &[f32], y: &[f32]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f64; LANES];
    let xc = x.chunks_exact(LANES);
    let yc = y.chunks_exact(LANES);
    let (xt, yt) = (xc.remainder(), yc.remainder());
    for (xs, ys) in xc.zip(yc) {
        for l in 0..LANES {
            acc[l] += f64::from(xs[l]) * f64::from(ys[l]);
        }
    }
    for l in 0..xt.len() {
        acc[l] += f64::from(xt[l]) * f64::from(yt[l]);
    }
    reduce(&acc)
}

/// Dot products of rows `x0, x1` against rows `y0, y1`.
#[inline(always)]
fn dot_2x2(x0: &[f32], x1: &[f32], y0: &[f32], y1: &[f32]) -> [f64; 4] {
    let d = x0.len();
    let body = d - d % LANES;
    let mut a00 = [0.0f64; LANES];
    let mut a01 = [0.0f64; LANES];
    let mut a10 = [0.0f64; LANES];
    let mut a11 = [0.0f64; LANES];
    let mut k = 0;
    while k < body {
        let xa: [f32; LANES] = x0[k..k + LANES].try_into().unwrap();
        let xb: [f32; LANES] = x1[k..k + LANES].try_into().unwrap();
        let ya: [f32; LANES] = y0[k..k + LANES].try_into().unwrap();
        let yb: [f32; LANES] = y1[k..k + LANES].try_into().unwrap();
        for l in 0..LANES {
            let (p, q) = (f64::from(xa[l]), f64::from(xb[l]));
            let (r, s) = (f64::from(ya[l]), f64::from(yb[l]));
            a00[l] += p * r;
            a01[l] += p * s;
            a10[l] += q * r;
            a11[l] += q * s;
        }
        k += LANES;
    }
    for l in 0..d - body {
        let (p, q) = (f64::from(x0[body + l]), f64::from(x1[body + l]));
        let (r, s) = (f64::from(y0[body + l]), f64::from(y1[body + l]));
        a00[l] += p * r;
        a01[l] += p * s;
        a10[l] += q * r;
        a11[l] += q * s;
    }
    [reduce(&a00), reduce(&a01), reduce(&a10), reduce(&a11)]
}

#[inline(always)]
fn row(s: &[f32], i: usize, d: usize) -> &[f32] {
    &s[i * d..(i + 1) * d]
}

#[inline(always)]
fn gram_block(x: &[f32], y: &[f32], d: usize, out: &mut [f64]) {
    let (tx, ty) = (x.len() / d, y.len() / d);
    let mut i = 0;
    while i + 1 < tx {
        let (x0, x1) = (row(x, i, d), row(x, i + 1, d));
        let mut j = 0;
        while j + 1 < ty {
            let [g00, g01, g10, g11] = dot_2x2(x0, x1, row(y, j, d), row(y, j + 1, d));
            out[i * ty + j] = g00;
            out[i * ty + j + 1] = g01;
            out[(i + 1) * ty + j] = g10;
            out[(i + 1) * ty + j + 1] = g11;
            j += 2;
        }
        if j < ty {
            out[i * ty + j] = dot(x0, row(y, j, d));
            out[(i + 1) * ty + j] = dot(x1, row(y, j, d));
        }
        i += 2;
    }
    if i < tx {
        for j in 0..ty {
            out[i * ty + j] = dot(row(x, i, d), row(y, j, d));
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gram_block_avx2(x: &[f32], y: &[f32], d: usize, out: &mut [f64]) {
    gram_block(x, y, d, out)
}

/// Fills `out` (row-major `T_x x T_y`) with dot products of the rows of `x`
/// and `y`, both row-major with row length `d`.
pub fn gram_into(x: &[f32], y: &[f32], d: usize, out: &mut [f64]) {
    assert!(d > 0 && x.len().is_multiple_of(d) && y.len().is_multiple_of(d));
    assert_eq!(out.len(), (x.len() / d) * (y.len() / d));
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { gram_block_avx2(x, y, d, out) };
            return;
        }
    }
    gram_block(x, y, d, out)
}

pub(crate) fn check_pair(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<(), MetricError> {
    if x.dim() != y.dim() {
        return Err(MetricError::DimMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    for s in [x, y] {
        if !s.is_normalized() {
            return Err(MetricError::NotNormalized {
                item_id: s.item_id().to_string(),
            });
        }
    }
    Ok(())
}

/// Cosine matrix `G[i][j] = x_i . y_j / (|x_i| |y_j|)` of two normalized
/// sequences. The norm factors are multiplied together first, so `G(y, x)`
/// is exactly the transpose of `G(x, y)`.
pub fn gram(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<GramMatrix, MetricError> {
    check_pair(x, y)?;
    let mut out = vec![0.0f64; x.len() * y.len()];
    gram_into(x.frames(), y.frames(), x.dim(), &mut out);
    let ty = y.len();
    for (i, &ix) in x.inv_norms().iter().enumerate() {
        for (g, &iy) in out[i * ty..(i + 1) * ty].iter_mut().zip(y.inv_norms()) {
            *g *= ix * iy;
        }
    }
    Ok(GramMatrix(Matrix::from_vec(x.len(), y.len(), out)))
}
