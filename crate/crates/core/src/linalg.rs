//! Small dense symmetric linear algebra for the local regression engine.
//!
//! The local-linear designs here are (d+1)x(d+1) with d <= 7, so a cyclic
//! Jacobi eigendecomposition is both simple and numerically exact enough:
//! it yields the reciprocal condition number and a stable solve in one pass.

use crate::scalar::{lit, Scalar};

/// Dense symmetric matrix in row-major storage.
#[derive(Debug, Clone)]
pub(crate) struct SymMatrix<T> {
    pub dim: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, values: vec![T::zero(); dim * dim] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.dim + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.dim + j] += v;
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_diagonal(&mut self, value: T) {
        for i in 0..self.dim {
            let v = self.get(i, i) + value;
            self.set(i, i, v);
        }
    }
}

/// Eigendecomposition of a symmetric matrix.
pub(crate) struct SymEigen<T> {
    /// Eigenvalues, unordered.
    pub values: Vec<T>,
    /// Eigenvectors stored column-wise: `vectors[i * dim + k]` is
    /// component `i` of eigenvector `k`.
    pub vectors: Vec<T>,
    pub dim: usize,
}

impl<T: Scalar> SymEigen<T> {
    /// Ratio of smallest to largest absolute eigenvalue; zero for a
    /// singular matrix.
    pub fn reciprocal_condition(&self) -> T {
        let mut max = T::zero();
        let mut min = T::infinity();
        for &v in &self.values {
            let a = v.abs();
            if a > max {
                max = a;
            }
            if a < min {
                min = a;
            }
        }
        if max == T::zero() {
            T::zero()
        } else {
            min / max
        }
    }

    /// Solves `A x = b` through the spectral decomposition. Eigenvalues with
    /// magnitude below `abs_floor` are treated as zero (pseudo-inverse).
    pub fn solve(&self, b: &[T], abs_floor: T) -> Vec<T> {
        let d = self.dim;
        let mut x = vec![T::zero(); d];
        for k in 0..d {
            let lambda = self.values[k];
            if lambda.abs() <= abs_floor {
                continue;
            }
            let mut proj = T::zero();
            for i in 0..d {
                proj += self.vectors[i * d + k] * b[i];
            }
            let scale = proj / lambda;
            for i in 0..d {
                x[i] += self.vectors[i * d + k] * scale;
            }
        }
        x
    }
}

/// Cyclic Jacobi sweep eigendecomposition. Converges quadratically for the
/// small dimensions used here; 30 sweeps is far beyond what is ever needed.
pub(crate) fn sym_eigen<T: Scalar>(a: &SymMatrix<T>) -> SymEigen<T> {
    let d = a.dim;
    let mut m = a.values.clone();
    let mut v = vec![T::zero(); d * d];
    for i in 0..d {
        v[i * d + i] = T::one();
    }
    let eps = T::epsilon() * lit::<T>(1e-2);
    for _sweep in 0..30 {
        let mut off = T::zero();
        for p in 0..d {
            for q in (p + 1)..d {
                off += m[p * d + q] * m[p * d + q];
            }
        }
        let scale = (0..d).map(|i| m[i * d + i].abs()).fold(T::zero(), T::max);
        if off.sqrt() <= eps * scale.max(T::min_positive_value()) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (lit::<T>(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = m[i * d + p];
                    let aiq = m[i * d + q];
                    m[i * d + p] = c * aip - s * aiq;
                    m[i * d + q] = s * aip + c * aiq;
                }
                for j in 0..d {
                    let apj = m[p * d + j];
                    let aqj = m[q * d + j];
                    m[p * d + j] = c * apj - s * aqj;
                    m[q * d + j] = s * apj + c * aqj;
                }
                for i in 0..d {
                    let vip = v[i * d + p];
                    let viq = v[i * d + q];
                    v[i * d + p] = c * vip - s * viq;
                    v[i * d + q] = s * vip + c * viq;
                }
            }
        }
    }
    let values = (0..d).map(|i| m[i * d + i]).collect();
    SymEigen { values, vectors: v, dim: d }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when the matrix is not positive definite.
pub(crate) fn cholesky<T: Scalar>(a: &SymMatrix<T>) -> Option<Vec<T>> {
    let d = a.dim;
    let mut l = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum = sum - l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= T::zero() {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Some(l)
}
