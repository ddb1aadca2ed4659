//! Small dense linear algebra kernels.
//!
//! The hot paths of the solvers (Cholesky factorizations of support-vector
//! blocks, pairwise scatter products) live here on a plain row-major buffer.
//! Factorizations are delegated to `faer`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Rows selected by `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: other.rows,
            });
        }
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let brow = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, brow, out.row_mut(i));
                }
            }
        }
        Ok(out)
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn to_faer(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j])
    }

    pub fn from_faer(m: faer::MatRef<'_, f64>) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with split accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

/// `y += a * x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            let t = x[k] - y[k];
            acc[k] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let t = x - y;
        tail += t * t;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// `Σ_pq W_pq (za_p − zb_q)(xa_p − xb_q)ᵀ` as an `r×d` matrix.
pub fn pair_scatter(w: &Mat, za: &Mat, xa: &Mat, zb: &Mat, xb: &Mat) -> Mat {
    use faer::linalg::matmul::matmul;
    use faer::{Accum, Par};
    let (p, q) = (w.rows(), w.cols());
    // Zaᵀ(diag(W1)·Xa − W·Xb) + Zbᵀ(diag(Wᵀ1)·Xb − Wᵀ·Xa)
    let wf = w.to_faer();
    let mut left = -(&wf * xb.to_faer());
    let mut right = -(wf.transpose() * xa.to_faer());
    for i in 0..p {
        let rs: f64 = w.row(i).iter().sum();
        for (k, v) in xa.row(i).iter().enumerate() {
            left[(i, k)] += rs * v;
        }
    }
    let mut cs = vec![0.0; q];
    for i in 0..p {
        for (c, v) in cs.iter_mut().zip(w.row(i)) {
            *c += v;
        }
    }
    for (j, c) in cs.iter().enumerate() {
        for (k, v) in xb.row(j).iter().enumerate() {
            right[(j, k)] += c * v;
        }
    }
    let mut out = za.to_faer().transpose() * &left;
    matmul(
        out.as_mut(),
        Accum::Add,
        zb.to_faer().transpose(),
        right.as_ref(),
        1.0,
        Par::Seq,
    );
    clear_upper_state();
    Mat::from_faer(out.as_ref())
}

/// faer's SIMD kernels can return with the upper vector lanes dirty, which
/// makes later scalar code (notably libm `exp`) pay a transition penalty.
#[inline]
pub(crate) fn clear_upper_state() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support was checked at runtime.
        unsafe { std::arch::x86_64::_mm256_zeroupper() }
    }
}

/// Cholesky factorization `A = G Gᵀ` of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl Cholesky {
    /// Factor the `n×n` row-major matrix `a` (only the lower triangle is read).
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        Self::factor_shifted(a, n, 0.0)
    }

    /// Factor `a + shift·I`.
    pub fn factor_shifted(a: &[f64], n: usize, shift: f64) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let m = faer::Mat::from_fn(n, n, |i, j| {
            if i == j {
                a[i * n + j] + shift
            } else {
                a[i * n + j]
            }
        });
        if m.as_ref()
            .diagonal()
            .column_vector()
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::NotPositiveDefinite { pivot: 0 });
        }
        let llt = m.llt(faer::Side::Lower);
        clear_upper_state();
        match llt {
            Ok(llt) => Ok(Cholesky { llt }),
            Err(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => {
                Err(Error::NotPositiveDefinite { pivot: index })
            }
        }
    }

    /// Factor, retrying once with `jitter·I` added when the plain factorization fails.
    pub fn factor_with_jitter(a: &[f64], n: usize, jitter: f64) -> Result<Self> {
        match Self::factor(a, n) {
            Ok(c) => Ok(c),
            Err(_) => Self::factor_shifted(a, n, jitter),
        }
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        use faer::linalg::solvers::Solve;
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut col = faer::MatMut::from_column_major_slice_mut(b, n, 1);
        self.llt.solve_in_place(&mut col);
        clear_upper_state();
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    /// The factor `G` as a matrix (upper triangle zero).
    pub fn factor_matrix(&self) -> Mat {
        let l = self.llt.L();
        Mat::from_fn(
            self.dim(),
            self.dim(),
            |i, j| if j <= i { l[(i, j)] } else { 0.0 },
        )
    }
}

/// Symmetric eigendecomposition, eigenvalues sorted in descending order.
/// Column `k` of the returned matrix is the eigenvector of eigenvalue `k`.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    assert_eq!(m.rows(), m.cols());
    let n = m.rows();
    // symmetrize exactly; callers pass matrices that are symmetric up to roundoff
    let sym = faer::Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let eig = sym
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigendecomposition of a finite matrix");
    clear_upper_state();
    let (vals, vecs) = (eig.S().column_vector(), eig.U());
    // ascending from the decomposition; reported descending
    let values = (0..n).rev().map(|k| vals[k]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| vecs[(i, n - 1 - j)]);
    (values, vectors)
}
