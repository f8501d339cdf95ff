//! Dense complex tensors and the handful of factorizations the MPO layer needs.
//!
//! Storage is row-major: the last axis varies fastest. Matrix factorizations
//! (SVD, QR, Hermitian eigendecomposition) are delegated to `faer`; the
//! symmetric tridiagonal eigensolver used for the Lanczos projection is
//! implemented here.

use faer::{Accum, MatMut, MatRef, Par, Side};
use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Singular values below this fraction of the largest one count as zero
/// when deciding ranks.
pub const RANK_CUTOFF: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("zero extent in shape {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("contracted axes {a_axis} (extent {a_extent}) and {b_axis} (extent {b_extent}) do not match")]
    ExtentMismatch { a_axis: usize, a_extent: usize, b_axis: usize, b_extent: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("axis {0} paired more than once")]
    RepeatedAxis(usize),
    #[error("expected a matrix, got rank {0}")]
    NotMatrix(usize),
    #[error("max_rank must be at least 1")]
    ZeroRank,
    #[error("empty tridiagonal matrix")]
    EmptyTridiagonal,
    #[error("off-diagonal length {beta} does not fit diagonal length {alpha}")]
    TridiagonalShape { alpha: usize, beta: usize },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("singular value decomposition failed")]
    SvdFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self, TensorError> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroExtent(shape));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(TensorError::LengthMismatch { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        assert!(!shape.contains(&0), "zero extent in shape {shape:?}");
        let len = shape.iter().product();
        Self { shape, data: vec![C64::new(0.0, 0.0); len] }
    }

    /// Builds a tensor by evaluating `f` on every multi-index in row-major order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; t.shape.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < t.shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        t
    }

    pub fn scalar(value: C64) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(vec![n, n], |ix| if ix[0] == ix[1] { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn from_real_matrix(rows: usize, cols: usize, values: &[f64]) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            debug_assert!(i < n);
            acc * n + i
        })
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[self.offset(index)]
    }

    /// Value of a rank-0 tensor (or the first element of any tensor).
    pub fn scalar_value(&self) -> C64 {
        self.data[0]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, TensorError> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(TensorError::Reshape { from: self.shape, to: shape });
        }
        Ok(Self { shape, data: self.data })
    }

    /// Reorders axes so that axis `k` of the result is axis `axes[k]` of `self`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self, TensorError> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank {
            return Err(TensorError::AxisOutOfRange { axis: axes.len(), rank });
        }
        for &a in axes {
            if a >= rank {
                return Err(TensorError::AxisOutOfRange { axis: a, rank });
            }
            if seen[a] {
                return Err(TensorError::RepeatedAxis(a));
            }
            seen[a] = true;
        }
        if axes.iter().enumerate().all(|(k, &a)| k == a) {
            return Ok(self.clone());
        }
        let strides = row_major_strides(&self.shape);
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let new_strides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[src]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                src += new_strides[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                src -= new_strides[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self { shape: new_shape, data })
    }

    pub fn conj(&self) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|z| z * c).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Elementwise `self + other`; shapes must agree.
    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::Reshape { from: other.shape.clone(), to: self.shape.clone() });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Result<Self, TensorError> {
        if self.rank() != 2 {
            return Err(TensorError::NotMatrix(self.rank()));
        }
        Ok(self.permute(&[1, 0])?.conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        contract(self, other, &[(1, 0)])
    }

    pub fn trace(&self) -> Result<C64, TensorError> {
        if self.rank() != 2 || self.shape[0] != self.shape[1] {
            return Err(TensorError::NotMatrix(self.rank()));
        }
        Ok((0..self.shape[0]).map(|i| self.get(&[i, i])).sum())
    }

    pub(crate) fn as_mat(&self) -> Result<MatRef<'_, C64>, TensorError> {
        if self.rank() != 2 {
            return Err(TensorError::NotMatrix(self.rank()));
        }
        Ok(MatRef::from_row_major_slice(&self.data, self.shape[0], self.shape[1]))
    }

    pub(crate) fn from_mat(m: MatRef<'_, C64>) -> Self {
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self { shape: vec![rows, cols], data }
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        strides[ax] = strides[ax + 1] * shape[ax + 1];
    }
    strides
}

/// Real parts, if every imaginary part is exactly zero.
///
/// Every operator in the shipped models is real, and real factorizations
/// are several times cheaper than complex ones, so the kernels below take
/// this path whenever they can.
fn real_parts(data: &[C64]) -> Option<Vec<f64>> {
    data.iter().all(|z| z.im == 0.0).then(|| data.iter().map(|z| z.re).collect())
}

fn complexify(data: &[f64]) -> Vec<C64> {
    data.iter().map(|&x| C64::new(x, 0.0)).collect()
}

fn gemm_generic<T: faer::traits::ComplexField>(a: &[T], b: &[T], m: usize, k: usize, n: usize, one: T) -> Vec<T> {
    let mut out = vec![T::zero_impl(); m * n];
    // Row-major data read column-major is the transpose: C^T = B^T A^T.
    let at = MatRef::from_column_major_slice(a, k, m);
    let bt = MatRef::from_column_major_slice(b, n, k);
    let ct = MatMut::from_column_major_slice_mut(&mut out, n, m);
    faer::linalg::matmul::matmul(ct, Accum::Replace, bt, at, one, Par::Seq);
    out
}

/// Row-major `m x k` times `k x n`, written into a row-major buffer.
pub(crate) fn gemm(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    if let (Some(ar), Some(br)) = (real_parts(a), real_parts(b)) {
        return complexify(&gemm_generic(&ar, &br, m, k, n, 1.0));
    }
    gemm_generic(a, b, m, k, n, C64::new(1.0, 0.0))
}

/// Sums over the paired axes of `a` and `b`; the free axes of the result are
/// those of `a` followed by those of `b`, each in original order.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor, TensorError> {
    let mut a_paired = vec![false; a.rank()];
    let mut b_paired = vec![false; b.rank()];
    for &(ia, ib) in pairs {
        if ia >= a.rank() {
            return Err(TensorError::AxisOutOfRange { axis: ia, rank: a.rank() });
        }
        if ib >= b.rank() {
            return Err(TensorError::AxisOutOfRange { axis: ib, rank: b.rank() });
        }
        if a_paired[ia] {
            return Err(TensorError::RepeatedAxis(ia));
        }
        if b_paired[ib] {
            return Err(TensorError::RepeatedAxis(ib));
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(TensorError::ExtentMismatch {
                a_axis: ia,
                a_extent: a.shape[ia],
                b_axis: ib,
                b_extent: b.shape[ib],
            });
        }
        a_paired[ia] = true;
        b_paired[ib] = true;
    }
    let a_free: Vec<usize> = (0..a.rank()).filter(|&x| !a_paired[x]).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|&x| !b_paired[x]).collect();

    let a_order: Vec<usize> = a_free.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
    let b_order: Vec<usize> = pairs.iter().map(|p| p.1).chain(b_free.iter().copied()).collect();
    let ap = a.permute(&a_order)?;
    let bp = b.permute(&b_order)?;

    let m: usize = a_free.iter().map(|&x| a.shape[x]).product();
    let k: usize = pairs.iter().map(|p| a.shape[p.0]).product();
    let n: usize = b_free.iter().map(|&x| b.shape[x]).product();
    let data = gemm(&ap.data, &bp.data, m, k, n);

    let shape: Vec<usize> = a_free
        .iter()
        .map(|&x| a.shape[x])
        .chain(b_free.iter().map(|&x| b.shape[x]))
        .collect();
    DenseTensor::new(shape, data)
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m x k` with orthonormal columns.
    pub u: DenseTensor,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// `k x n` with orthonormal rows.
    pub vt: DenseTensor,
    /// Sum of squared singular values that were dropped by the rank cap.
    pub truncation_weight: f64,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U diag(s) V†` as a dense matrix.
    pub fn reconstruct(&self) -> DenseTensor {
        let k = self.rank();
        let scaled = DenseTensor::from_fn(self.u.shape().to_vec(), |ix| {
            self.u.get(ix) * self.singular_values[ix[1]]
        });
        debug_assert_eq!(scaled.shape()[1], k);
        scaled.matmul(&self.vt).expect("factor shapes agree")
    }
}

/// Thin SVD keeping at most `max_rank` triplets.
///
/// Values below `RANK_CUTOFF * s_max` are treated as exact zeros: they are
/// dropped without contributing to the truncation weight. At least one
/// triplet is always kept so a zero matrix still factors into valid shapes.
pub fn truncated_svd(m: &DenseTensor, max_rank: usize) -> Result<SvdResult, TensorError> {
    sequential_faer();
    if max_rank == 0 {
        return Err(TensorError::ZeroRank);
    }
    if m.rank() != 2 {
        return Err(TensorError::NotMatrix(m.rank()));
    }
    let (rows, cols) = (m.shape[0], m.shape[1]);
    // U as row-major rows x r, V† as row-major r x cols, r = min(rows, cols).
    let (full, u_full, vt_full) = match real_parts(&m.data) {
        Some(re) => {
            let svd = MatRef::from_row_major_slice(&re, rows, cols).thin_svd().map_err(|_| TensorError::SvdFailed)?;
            let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
            let r = s.nrows();
            let full: Vec<f64> = (0..r).map(|i| s[i]).collect();
            let u_rows: Vec<C64> = (0..rows).flat_map(|i| (0..r).map(move |j| C64::new(u[(i, j)], 0.0))).collect();
            let vt: Vec<C64> = (0..r).flat_map(|i| (0..cols).map(move |j| C64::new(v[(j, i)], 0.0))).collect();
            (full, u_rows, vt)
        }
        None => {
            let svd = m.as_mat()?.thin_svd().map_err(|_| TensorError::SvdFailed)?;
            let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
            let r = s.nrows();
            let full: Vec<f64> = (0..r).map(|i| s[i].re).collect();
            let u_rows: Vec<C64> = (0..rows).flat_map(|i| (0..r).map(move |j| u[(i, j)])).collect();
            let vt: Vec<C64> = (0..r).flat_map(|i| (0..cols).map(move |j| v[(j, i)].conj())).collect();
            (full, u_rows, vt)
        }
    };
    let r = full.len();
    let s_max = full.first().copied().unwrap_or(0.0);
    let numerical_rank = full.iter().take_while(|&&v| v > RANK_CUTOFF * s_max).count().max(1);
    let keep = numerical_rank.min(max_rank);
    let truncation_weight: f64 = full[keep..numerical_rank].iter().map(|v| v * v).sum();

    let u_data: Vec<C64> = (0..rows).flat_map(|i| u_full[i * r..i * r + keep].iter().copied()).collect();
    let vt_data = vt_full[..keep * cols].to_vec();
    Ok(SvdResult {
        u: DenseTensor::new(vec![rows, keep], u_data)?,
        singular_values: full[..keep].to_vec(),
        vt: DenseTensor::new(vec![keep, cols], vt_data)?,
        truncation_weight,
    })
}

/// faer's decompositions otherwise split work over the ambient rayon pool,
/// and the split changes the rounding. Results must not depend on how many
/// sweep workers are running.
fn sequential_faer() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Thin QR factorization: `m = q r` with `q` isometric (`rows x k`) and
/// `r` upper trapezoidal (`k x cols`), `k = min(rows, cols)`.
pub fn thin_qr(m: &DenseTensor) -> Result<(DenseTensor, DenseTensor), TensorError> {
    sequential_faer();
    let mat = m.as_mat()?;
    if let Some(re) = real_parts(&m.data) {
        let qr = MatRef::from_row_major_slice(&re, mat.nrows(), mat.ncols()).qr();
        let to_c = |x: MatRef<'_, f64>| {
            let data = (0..x.nrows()).flat_map(|i| (0..x.ncols()).map(move |j| C64::new(x[(i, j)], 0.0))).collect();
            DenseTensor { shape: vec![x.nrows(), x.ncols()], data }
        };
        return Ok((to_c(qr.compute_thin_Q().as_ref()), to_c(qr.thin_R())));
    }
    let qr = mat.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    Ok((DenseTensor::from_mat(q.as_ref()), DenseTensor::from_mat(r)))
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues ascending; the
/// returned matrix holds eigenvectors as columns.
pub fn hermitian_eig(m: &DenseTensor) -> Result<(Vec<f64>, DenseTensor), TensorError> {
    sequential_faer();
    let mat = m.as_mat()?;
    if mat.nrows() != mat.ncols() {
        return Err(TensorError::NotMatrix(2));
    }
    let evd = mat.self_adjoint_eigen(Side::Lower).map_err(|_| TensorError::NoConvergence)?;
    let s = evd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((values, DenseTensor::from_mat(evd.U())))
}

/// Eigenvalues only, for real symmetric input (faster path for the oracle).
pub fn real_symmetric_eigenvalues(n: usize, values: &[f64]) -> Result<Vec<f64>, TensorError> {
    sequential_faer();
    let mat = MatRef::from_row_major_slice(values, n, n);
    mat.self_adjoint_eigenvalues(Side::Lower).map_err(|_| TensorError::NoConvergence)
}

/// Real symmetric eigendecomposition; eigenvectors as columns of a row-major `n x n` array.
pub fn real_symmetric_eig(n: usize, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>), TensorError> {
    sequential_faer();
    let mat = MatRef::from_row_major_slice(values, n, n);
    let evd = mat.self_adjoint_eigen(Side::Lower).map_err(|_| TensorError::NoConvergence)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|i| s[i]).collect();
    let vecs = (0..n).flat_map(|i| (0..n).map(move |j| u[(i, j)])).collect();
    Ok((vals, vecs))
}

/// Spectrum of a real symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Row-major `k x k`; column `j` is the unit eigenvector for `eigenvalues[j]`.
    pub eigenvectors: Vec<f64>,
}

impl TridiagonalEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector_component(&self, row: usize, col: usize) -> f64 {
        self.eigenvectors[row * self.dim() + col]
    }
}

/// Eigendecomposition of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta` (`beta[i]` couples `i` and `i + 1`).
///
/// Implicit QL iteration with Wilkinson shifts, accumulating the rotations
/// into the eigenvector matrix.
pub fn symtridiag_eig(alpha: &[f64], beta: &[f64]) -> Result<TridiagonalEigen, TensorError> {
    let n = alpha.len();
    if n == 0 {
        return Err(TensorError::EmptyTridiagonal);
    }
    if beta.len() + 1 != n {
        return Err(TensorError::TridiagonalShape { alpha: n, beta: beta.len() });
    }
    let mut d = alpha.to_vec();
    let mut e: Vec<f64> = beta.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut shift_acc = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n - 1] is zero, so m < n here.
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                if iterations > 60 {
                    return Err(TensorError::NoConvergence);
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift_acc += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_acc;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let eigenvalues = order.iter().map(|&j| d[j]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors[row * n + new_col] = v[row * n + old_col];
        }
    }
    Ok(TridiagonalEigen { eigenvalues, eigenvectors })
}
