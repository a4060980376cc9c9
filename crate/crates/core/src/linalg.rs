//! Dense matrix helpers sized for ion chains (N <= a few tens). Hand-rolled
//! Gaussian elimination and cyclic Jacobi keep the dependency surface flat and
//! the results deterministic across platforms.

use crate::float::Float;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Float> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.concat() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<F> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Writes `self * x` into `out` without allocating.
    pub fn mul_vec_into(&self, x: &[F], out: &mut [F]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            out[i] = self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> F {
        self.data.iter().map(|&v| v * v).sum::<F>().sqrt()
    }

    pub fn is_symmetric(&self, tol: F) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (i + 1..self.cols).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl<F: Float> std::ops::Index<(usize, usize)> for Matrix<F> {
    type Output = F;

    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Float> std::ops::IndexMut<(usize, usize)> for Matrix<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<F: Float>(x: &[F]) -> F {
    dot(x, x).sqrt()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot collapses below the working precision.
pub fn solve<F: Float>(a: &Matrix<F>, b: &[F]) -> Option<Vec<F>> {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let tiny = F::epsilon() * F::of_usize(n.max(1)) * m.max_abs().max(F::one());
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&i, &j| m[(i, k)].abs().partial_cmp(&m[(j, k)].abs()).unwrap())
            .unwrap();
        if m[(pivot_row, k)].abs() <= tiny {
            return None;
        }
        if pivot_row != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = t;
            }
            rhs.swap(k, pivot_row);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == F::zero() {
                continue;
            }
            for j in k..n {
                let mkj = m[(k, j)];
                m[(i, j)] -= f * mkj;
            }
            let rk = rhs[k];
            rhs[i] -= f * rk;
        }
    }
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Some(x)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// matrix columns. Vectors are orthonormal to working precision; no sign or
/// degeneracy convention is applied here.
pub fn symmetric_eigen<F: Float>(a: &Matrix<F>) -> (Vec<F>, Matrix<F>) {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    debug_assert!(a.is_symmetric(F::epsilon() * F::of(100.0) * a.max_abs().max(F::one())));
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm().max(F::min_positive_value());
    let stop = F::epsilon() * scale;
    for _sweep in 0..64 {
        let mut off = F::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= F::epsilon() * scale * F::of(1e-3) {
                    continue;
                }
                // Symmetric Schur rotation: pick the smaller-angle root for stability.
                let tau = (m[(q, q)] - m[(p, p)]) / (F::of(2.0) * apq);
                let t = {
                    let root = (F::one() + tau * tau).sqrt();
                    if tau >= F::zero() { (tau + root).recip() } else { -(-tau + root).recip() }
                };
                let c = (F::one() + t * t).sqrt().recip();
                let s = t * c;
                let (app, aqq) = (m[(p, p)], m[(q, q)]);
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = F::zero();
                m[(q, p)] = F::zero();
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let (aip, aiq) = (m[(i, p)], m[(i, q)]);
                    m[(i, p)] = c * aip - s * aiq;
                    m[(p, i)] = m[(i, p)];
                    m[(i, q)] = s * aip + c * aiq;
                    m[(q, i)] = m[(i, q)];
                }
                for i in 0..n {
                    let (vip, viq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (values, vectors)
}
