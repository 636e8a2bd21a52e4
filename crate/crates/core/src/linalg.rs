//! Dense row-major matrices and a one-sided Jacobi SVD.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major `rows x cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
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

    /// Wraps a row-major buffer. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer has wrong length");
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin singular value decomposition `A = U diag(s) V^T`.
///
/// Only the numerically nonzero singular triplets are kept, in
/// non-increasing order of `s`. `u` is `m x r`, `v` is `n x r`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Keeps the leading `k` triplets (or all of them if fewer exist).
    pub fn truncate(mut self, k: usize) -> Svd {
        let k = k.min(self.rank());
        self.u = take_columns(&self.u, k);
        self.v = take_columns(&self.v, k);
        self.singular_values.truncate(k);
        self
    }

    /// `U diag(s) V^T`
    pub fn reconstruct(&self) -> Matrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let ui = self.u.row(i);
            for j in 0..n {
                let vj = self.v.row(j);
                let mut acc = 0.0;
                for (r, s) in self.singular_values.iter().enumerate() {
                    acc += ui[r] * s * vj[r];
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}

fn take_columns(m: &Matrix, k: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), k);
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&m.row(i)[..k]);
    }
    out
}

const MAX_SWEEPS: usize = 60;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of the narrower orientation of `a` with plane
/// rotations until every column pair is orthogonal to working precision.
pub fn svd(a: &Matrix) -> Svd {
    if a.rows() < a.cols() {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    let (m, n) = (a.rows(), a.cols());
    // Column-major working copies: work[j] is column j of A*V.
    let mut work: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut col = vec![0.0; n];
            col[j] = 1.0;
            col
        })
        .collect();

    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&work[p], &work[p]);
                let beta = dot(&work[q], &work[q]);
                let gamma = dot(&work[p], &work[q]);
                if gamma == 0.0 || libm::fabs(gamma) <= eps * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut work, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut triplets: Vec<(f64, usize)> = work.iter().enumerate().map(|(j, col)| (norm(col), j)).collect();
    triplets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let s_max = triplets.first().map_or(0.0, |t| t.0);
    let tol = s_max * eps * (m.max(n) as f64);
    let kept: Vec<(f64, usize)> = triplets.into_iter().filter(|&(s, _)| s > tol && s > 0.0).collect();

    let r = kept.len();
    let mut u_out = Matrix::zeros(m, r);
    let mut v_out = Matrix::zeros(n, r);
    let mut values = Vec::with_capacity(r);
    for (col, &(s, j)) in kept.iter().enumerate() {
        values.push(s);
        for i in 0..m {
            u_out.set(i, col, work[j][i] / s);
        }
        for i in 0..n {
            v_out.set(i, col, v[j][i]);
        }
    }
    fix_signs(&mut u_out, &mut v_out);
    Svd {
        u: u_out,
        singular_values: values,
        v: v_out,
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Makes the largest-magnitude entry of every right singular vector positive
/// so the factorization is reproducible.
fn fix_signs(u: &mut Matrix, v: &mut Matrix) {
    for col in 0..v.cols() {
        let mut best = 0.0f64;
        for i in 0..v.rows() {
            let x = v.get(i, col);
            if libm::fabs(x) > libm::fabs(best) {
                best = x;
            }
        }
        if best < 0.0 {
            for i in 0..v.rows() {
                v.set(i, col, -v.get(i, col));
            }
            for i in 0..u.rows() {
                u.set(i, col, -u.get(i, col));
            }
        }
    }
}
