//! Minimal dense tensor (up to 3 dims, row-major f64) and the matrix
//! kernels behind every layer.
//!
//! The three GEMM variants cover forward passes and both backprop products:
//! `gemm_nn` (A.B), `gemm_tn` (A^T.B, weight gradients), `gemm_nt` (A.B^T,
//! input gradients). Inner loops run over contiguous rows so LLVM can
//! vectorize them; summation order is fixed, which keeps results
//! bit-reproducible.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch { op: &'static str, expected: String, found: String },
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(!shape.is_empty() && shape.len() <= 3, "1..=3 dims, got {shape:?}");
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert!(!shape.is_empty() && shape.len() <= 3, "1..=3 dims, got {shape:?}");
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data length mismatch");
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of trailing columns (product of all dims after the first).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

// register tile of the main kernel: MR c-rows held in NR-wide accumulators
const MR: usize = 8;
const NR: usize = 8;

/// C[m,n] (+)= sum_k A[m,k] * B[k,n]. `a` is (m,k), `b` is (k,n), `c` is (m,n).
///
/// Register-tiled micro-kernel: each loaded B row feeds up to MR output
/// rows, and `mul_add` maps to hardware FMA (exactly rounded). Every output
/// element sees the same operation sequence -- an FMA chain over ascending k
/// into a zeroed accumulator, then one add -- no matter where its row or
/// column lands in the tiling, so results do not depend on batch placement.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if k == 1 {
        // outer product: one scaled row per output row
        for (mi, crow) in c.chunks_exact_mut(n).enumerate() {
            let av = a[mi];
            if accumulate {
                for (cv, &bv) in crow.iter_mut().zip(b) {
                    *cv = av.mul_add(bv, *cv);
                }
            } else {
                for (cv, &bv) in crow.iter_mut().zip(b) {
                    *cv = av * bv;
                }
            }
        }
        return;
    }
    let m_main = m - m % MR;
    for mt in (0..m_main).step_by(MR) {
        let arows: [&[f64]; MR] = std::array::from_fn(|i| &a[(mt + i) * k..(mt + i + 1) * k]);
        row_block::<MR>(&arows, n, b, &mut c[mt * n..(mt + MR) * n], accumulate);
    }
    for mi in m_main..m {
        let arows = [&a[mi * k..(mi + 1) * k]];
        row_block::<1>(&arows, n, b, &mut c[mi * n..(mi + 1) * n], accumulate);
    }
}

fn row_block<const R: usize>(
    arows: &[&[f64]; R],
    n: usize,
    b: &[f64],
    c: &mut [f64],
    accumulate: bool,
) {
    let n_main = n - n % NR;
    for nt in (0..n_main).step_by(NR) {
        let mut acc = [[0.0f64; NR]; R];
        for (ki, brow) in b.chunks_exact(n).enumerate() {
            let bv: &[f64; NR] = brow[nt..nt + NR].try_into().expect("NR window");
            for mi in 0..R {
                let av = arows[mi][ki];
                for ni in 0..NR {
                    acc[mi][ni] = av.mul_add(bv[ni], acc[mi][ni]);
                }
            }
        }
        for (mi, row) in acc.iter().enumerate() {
            let crow = &mut c[mi * n + nt..mi * n + nt + NR];
            if accumulate {
                for (cv, &av) in crow.iter_mut().zip(row) {
                    *cv += av;
                }
            } else {
                crow.copy_from_slice(row);
            }
        }
    }
    for ni in n_main..n {
        for (mi, arow) in arows.iter().enumerate() {
            let mut acc = 0.0f64;
            for (ki, &av) in arow.iter().enumerate() {
                acc = av.mul_add(b[ki * n + ni], acc);
            }
            if accumulate {
                c[mi * n + ni] += acc;
            } else {
                c[mi * n + ni] = acc;
            }
        }
    }
}

/// Out-of-place transpose: `a` is (rows, cols), `out` becomes (cols, rows).
pub fn transpose_into(rows: usize, cols: usize, a: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
}

/// C[k,n] (+)= sum_m A[m,k] * B[m,n]. `a` is (m,k), `b` is (m,n), `c` is (k,n).
///
/// Weight-gradient shape: the (k,n) output is small and stays cache
/// resident while `a` and `b` stream through exactly once.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    if !accumulate {
        c.fill(0.0);
    }
    for mi in 0..m {
        let a_row = &a[mi * k..(mi + 1) * k];
        let b_row = &b[mi * n..(mi + 1) * n];
        for (ki, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let c_row = &mut c[ki * n..(ki + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = av.mul_add(bv, *cv);
            }
        }
    }
}

/// C[m,n] (+)= sum_k A[m,k] * B[n,k]. `a` is (m,k), `b` is (n,k), `c` is (m,n).
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.fill(0.0);
    }
    for mi in 0..m {
        let a_row = &a[mi * k..(mi + 1) * k];
        let c_row = &mut c[mi * n..(mi + 1) * n];
        for ni in 0..n {
            c_row[ni] += dot(a_row, &b[ni * k..(ni + 1) * k]);
        }
    }
}

/// Eight-accumulator dot product: fixed summation order, enough ILP for the
/// vectorizer.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let j = i * 8;
        for lane in 0..8 {
            acc[lane] = a[j + lane].mul_add(b[j + lane], acc[lane]);
        }
    }
    let mut tail = 0.0;
    for j in chunks * 8..a.len() {
        tail = a[j].mul_add(b[j], tail);
    }
    let s01 = acc[0] + acc[1];
    let s23 = acc[2] + acc[3];
    let s45 = acc[4] + acc[5];
    let s67 = acc[6] + acc[7];
    (s01 + s23) + (s45 + s67) + tail
}

/// Tensor-level A(m,k) . B(k,n); shape-checked entry point for callers
/// outside the hot path.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            expected: "(m,k).(k,n)".into(),
            found: format!("{:?}.{:?}", a.shape(), b.shape()),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut c = Tensor::zeros(&[m, n]);
    gemm_nn(m, k, n, a.data(), b.data(), c.data_mut(), false);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force triple loop, deliberately separate from the kernels.
    fn naive_matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for mi in 0..m {
            for ni in 0..n {
                let mut s = 0.0;
                for ki in 0..k {
                    s += a[mi * k + ki] * b[ki * n + ni];
                }
                c[mi * n + ni] = s;
            }
        }
        c
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..len)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn gemm_variants_match_naive() {
        let (m, k, n) = (5, 7, 6);
        let a = pseudo_random(m * k, 1);
        let b = pseudo_random(k * n, 2);
        let want = naive_matmul(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut c, false);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // tn: A^T has shape (k,m); feed A^T as the "a" argument of gemm_tn
        let mut at = vec![0.0; m * k];
        for mi in 0..m {
            for ki in 0..k {
                at[ki * m + mi] = a[mi * k + ki];
            }
        }
        let mut c2 = vec![0.0; m * n];
        gemm_tn(k, m, n, &at, &b, &mut c2, false);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // nt: B^T has shape (n,k); feed B^T as the "b" argument of gemm_nt
        let mut bt = vec![0.0; k * n];
        for ki in 0..k {
            for ni in 0..n {
                bt[ni * k + ki] = b[ki * n + ni];
            }
        }
        let mut c3 = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &bt, &mut c3, false);
        for (x, y) in c3.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn accumulate_adds_on_top() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut c = [10.0];
        gemm_nn(1, 2, 1, &a, &b, &mut c, true);
        assert_eq!(c[0], 10.0 + 11.0);
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn dot_matches_naive_order_independent_cases() {
        let a = pseudo_random(37, 3);
        let b = pseudo_random(37, 4);
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
