//! Small dense linear algebra kernel: a row-major matrix plus the handful of
//! factorizations the models need (Householder QR, LU determinant).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row vectors. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
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

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so guard the degenerate width
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Dimension {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok(self.rows().map(|r| dot(r, v)).collect())
    }

    /// `self' * v`
    pub fn t_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Dimension {
                expected: self.rows,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vi) in self.rows().zip(v) {
            for (o, x) in out.iter_mut().zip(r) {
                *o += x * vi;
            }
        }
        Ok(out)
    }

    /// `self' * diag(w) * self`; `w = None` means the plain Gram matrix.
    pub fn weighted_gram(&self, w: Option<&[f64]>) -> Matrix {
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for (i, r) in self.rows().enumerate() {
            let wi = w.map_or(1.0, |w| w[i]);
            if wi == 0.0 {
                continue;
            }
            for a in 0..p {
                let ra = r[a] * wi;
                if ra == 0.0 {
                    continue;
                }
                for b in a..p {
                    g.data[a * p + b] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g.data[a * p + b] = g.data[b * p + a];
            }
        }
        g
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR factorization of a tall matrix (n ≥ p), without pivoting.
///
/// Columns whose diagonal entry of R falls below `rank_tol` times the largest
/// diagonal magnitude are reported as linearly dependent on earlier columns.
#[derive(Debug, Clone)]
pub struct Qr {
    /// Householder vectors stored below the diagonal, R on and above it.
    packed: Matrix,
    betas: Vec<f64>,
    dependent: Vec<usize>,
}

impl Qr {
    pub fn new(a: &Matrix, rank_tol: f64) -> Result<Qr> {
        let (n, p) = (a.nrows(), a.ncols());
        if n < p {
            return Err(Error::Dimension { expected: p, got: n });
        }
        let mut m = a.clone();
        let mut betas = vec![0.0; p];
        for k in 0..p {
            let norm = (k..n).map(|i| m[(i, k)] * m[(i, k)]).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if m[(k, k)] > 0.0 { -norm } else { norm };
            let v0 = m[(k, k)] - alpha;
            // v = (v0, m[k+1.., k]); stored scaled so v[0] = 1
            for i in k + 1..n {
                m[(i, k)] /= v0;
            }
            let beta = -v0 / alpha;
            betas[k] = beta;
            m[(k, k)] = alpha;
            for j in k + 1..p {
                let mut s = m[(k, j)];
                for i in k + 1..n {
                    s += m[(i, k)] * m[(i, j)];
                }
                s *= beta;
                m[(k, j)] -= s;
                for i in k + 1..n {
                    let vik = m[(i, k)];
                    m[(i, j)] -= s * vik;
                }
            }
        }
        let max_diag = (0..p).map(|k| m[(k, k)].abs()).fold(0.0, f64::max);
        let dependent = (0..p)
            .filter(|&k| max_diag == 0.0 || m[(k, k)].abs() <= rank_tol * max_diag)
            .collect();
        Ok(Qr {
            packed: m,
            betas,
            dependent,
        })
    }

    /// Indices of columns detected as linearly dependent.
    pub fn dependent_columns(&self) -> &[usize] {
        &self.dependent
    }

    pub fn is_full_rank(&self) -> bool {
        self.dependent.is_empty()
    }

    /// Applies Qᵀ to `b` in place.
    fn apply_qt(&self, b: &mut [f64]) {
        let (n, p) = (self.packed.nrows(), self.packed.ncols());
        for k in 0..p {
            if self.betas[k] == 0.0 {
                continue;
            }
            let mut s = b[k];
            for i in k + 1..n {
                s += self.packed[(i, k)] * b[i];
            }
            s *= self.betas[k];
            b[k] -= s;
            for i in k + 1..n {
                b[i] -= s * self.packed[(i, k)];
            }
        }
    }

    /// Least-squares solution of `A x ≈ b`. Requires full column rank.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (n, p) = (self.packed.nrows(), self.packed.ncols());
        if b.len() != n {
            return Err(Error::Dimension { expected: n, got: b.len() });
        }
        if !self.is_full_rank() {
            return Err(Error::Model("least-squares solve on rank-deficient matrix".into()));
        }
        let mut qtb = b.to_vec();
        self.apply_qt(&mut qtb);
        let mut x = vec![0.0; p];
        for k in (0..p).rev() {
            let mut s = qtb[k];
            for j in k + 1..p {
                s -= self.packed[(k, j)] * x[j];
            }
            x[k] = s / self.packed[(k, k)];
        }
        Ok(x)
    }

    /// Upper-triangular factor R (p × p).
    pub fn r(&self) -> Matrix {
        let p = self.packed.ncols();
        Matrix::from_fn(p, p, |i, j| if j >= i { self.packed[(i, j)] } else { 0.0 })
    }

    /// `(AᵀA)⁻¹ = R⁻¹ R⁻ᵀ`, computed without forming the normal equations.
    pub fn gram_inverse(&self) -> Result<Matrix> {
        if !self.is_full_rank() {
            return Err(Error::Model("gram inverse of rank-deficient matrix".into()));
        }
        let p = self.packed.ncols();
        // invert R column by column (back substitution on unit vectors)
        let mut rinv = Matrix::zeros(p, p);
        for c in 0..p {
            for k in (0..=c).rev() {
                let mut s = if k == c { 1.0 } else { 0.0 };
                for j in k + 1..=c {
                    s -= self.packed[(k, j)] * rinv[(j, c)];
                }
                rinv[(k, c)] = s / self.packed[(k, k)];
            }
        }
        let mut out = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let s: f64 = (j..p).map(|k| rinv[(i, k)] * rinv[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        Ok(out)
    }
}

/// Determinant by LU decomposition with partial pivoting.
pub fn determinant(a: &Matrix) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "determinant of non-square matrix");
    if n == 0 {
        return 1.0;
    }
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs()))
            .unwrap();
        if m[(piv, k)] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            det = -det;
        }
        let d = m[(k, k)];
        det *= d;
        for i in k + 1..n {
            let f = m[(i, k)] / d;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                let mkj = m[(k, j)];
                m[(i, j)] -= f * mkj;
            }
        }
    }
    det
}
