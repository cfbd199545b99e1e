//! Small dense linear algebra: a row-major matrix, Cholesky factorization,
//! triangular solves, cyclic Jacobi eigendecomposition for symmetric
//! matrices, and Householder QR.

use std::ops::{Index, IndexMut};

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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Panics if the rows have different lengths.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
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

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += v;
        }
    }

    /// Adds `weight * x xᵀ`.
    pub fn add_outer(&mut self, x: &[f64], weight: f64) {
        for i in 0..self.rows {
            let wi = weight * x[i];
            for j in 0..self.cols {
                self[(i, j)] += wi * x[j];
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular `L` with `A = L Lᵀ`, or `None` when `A` is not
/// numerically positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "cholesky needs a square matrix");
    let scale = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let tol = scale * f64::EPSILON * n.max(1) as f64 * 16.0;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        // NaN fails too
        if d.is_nan() || d <= tol {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `U x = b` for upper-triangular `U` (only the leading square
/// block of `U` is read).
pub fn solve_upper(u: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = u.cols();
    let mut x = b[..n].to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= u[(i, k)] * x[k];
        }
        x[i] = s / u[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen(a: &Matrix) -> SymmetricEigen {
    let n = a.rows();
    assert_eq!(n, a.cols(), "eigen needs a square matrix");
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= scale * 1e-15 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    SymmetricEigen {
        values: order.iter().map(|&i| m[(i, i)]).collect(),
        vectors: order.iter().map(|&i| v.column(i)).collect(),
    }
}

/// Householder QR of an `n × p` matrix with `n ≥ p`.
#[derive(Debug, Clone)]
pub struct Qr {
    /// Upper triangle holds `R`; below the diagonal, the reflector tails.
    packed: Matrix,
    /// Reflector heads (`v[k]` for column k).
    heads: Vec<f64>,
    betas: Vec<f64>,
}

impl Qr {
    pub fn new(a: &Matrix) -> Qr {
        let (n, p) = (a.rows(), a.cols());
        assert!(n >= p, "QR needs at least as many rows as columns");
        let mut m = a.clone();
        let mut heads = vec![0.0; p];
        let mut betas = vec![0.0; p];
        for k in 0..p {
            let alpha_norm = (k..n).map(|i| m[(i, k)] * m[(i, k)]).sum::<f64>().sqrt();
            if alpha_norm == 0.0 {
                continue;
            }
            let x0 = m[(k, k)];
            let alpha = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
            // v = x - alpha e1; H = I - beta v vᵀ
            let v0 = x0 - alpha;
            let vtv = v0 * v0 + (k + 1..n).map(|i| m[(i, k)] * m[(i, k)]).sum::<f64>();
            let beta = 2.0 / vtv;
            for j in k + 1..p {
                let mut s = v0 * m[(k, j)];
                for i in k + 1..n {
                    s += m[(i, k)] * m[(i, j)];
                }
                let s = beta * s;
                m[(k, j)] -= s * v0;
                for i in k + 1..n {
                    let vi = m[(i, k)];
                    m[(i, j)] -= s * vi;
                }
            }
            m[(k, k)] = alpha;
            heads[k] = v0;
            betas[k] = beta;
        }
        Qr {
            packed: m,
            heads,
            betas,
        }
    }

    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.packed.cols())
            .map(|i| self.packed[(i, i)])
            .collect()
    }

    /// The `p × p` upper-triangular factor.
    pub fn r(&self) -> Matrix {
        let p = self.packed.cols();
        let mut r = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                r[(i, j)] = self.packed[(i, j)];
            }
        }
        r
    }

    /// `Qᵀ b`.
    pub fn qt_mul(&self, b: &[f64]) -> Vec<f64> {
        let (n, p) = (self.packed.rows(), self.packed.cols());
        let mut y = b.to_vec();
        for k in 0..p {
            if self.betas[k] == 0.0 {
                continue;
            }
            let mut s = self.heads[k] * y[k];
            for (i, yi) in y.iter().enumerate().take(n).skip(k + 1) {
                s += self.packed[(i, k)] * yi;
            }
            let s = self.betas[k] * s;
            y[k] -= s * self.heads[k];
            for (i, yi) in y.iter_mut().enumerate().take(n).skip(k + 1) {
                *yi -= s * self.packed[(i, k)];
            }
        }
        y
    }
}

/// Inverse of an upper-triangular matrix.
pub fn invert_upper(u: &Matrix) -> Matrix {
    let n = u.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_upper(u, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv
}
