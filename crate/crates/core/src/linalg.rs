//! Small dense symmetric linear algebra.
//!
//! Normalizer matrices in this crate are p x p with p rarely above 3, so a
//! cyclic Jacobi eigendecomposition is both simpler and more robust than a
//! general factorization. Quadratic forms `x' V^{-1} x` are evaluated through
//! the eigendecomposition, and the condition number `lambda_max / lambda_min`
//! gates every inversion: past [`COND_LIMIT`] the matrix is treated as
//! singular and the caller gets an error carrying the condition number.

use crate::error::{Result, SnError};

/// Relative condition-number threshold beyond which a normalizer is rejected.
pub const COND_LIMIT: f64 = 1e12;

/// Dense symmetric matrix, row-major full storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    p: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(p: usize) -> Self {
        SymMat {
            p,
            data: vec![0.0; p * p],
        }
    }

    pub fn from_rows(p: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), p * p);
        SymMat { p, data }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.p + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Add `w * v v'` to the matrix.
    pub fn add_outer(&mut self, v: &[f64], w: f64) {
        debug_assert_eq!(v.len(), self.p);
        for i in 0..self.p {
            let wi = w * v[i];
            for j in 0..self.p {
                self.data[i * self.p + j] += wi * v[j];
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    pub fn add(&mut self, other: &SymMat) {
        debug_assert_eq!(self.p, other.p);
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += *y;
        }
    }

    /// Largest absolute entry, used for relative comparisons in tests.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Enforce exact symmetry by averaging off-diagonal pairs.
    pub fn symmetrize(&mut self) {
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                let m = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, m);
                self.set(j, i, m);
            }
        }
    }

    /// Eigenvalues of the symmetric matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (vals, _) = jacobi_eigen(self);
        vals
    }

    /// Quadratic form `x' A^{-1} x` through the eigendecomposition.
    ///
    /// Returns the value together with the condition number. Fails when any
    /// eigenvalue is not strictly positive or the condition number exceeds
    /// [`COND_LIMIT`].
    pub fn quad_form_inv(&self, x: &[f64], context: &str) -> Result<(f64, f64)> {
        debug_assert_eq!(x.len(), self.p);
        let (vals, vecs) = jacobi_eigen(self);
        let max = vals.iter().fold(0.0f64, |m, v| m.max(*v));
        let min = vals.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(min > 0.0) || cond > COND_LIMIT {
            return Err(SnError::Singular {
                cond,
                context: context.to_string(),
            });
        }
        // x' A^{-1} x = sum_k (q_k' x)^2 / lambda_k
        let mut total = 0.0;
        for k in 0..self.p {
            let mut proj = 0.0;
            for i in 0..self.p {
                proj += vecs[i * self.p + k] * x[i];
            }
            total += proj * proj / vals[k];
        }
        Ok((total, cond))
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns (eigenvalues ascending, eigenvectors column-major aligned with the
/// eigenvalues: column k of the returned matrix is the k-th eigenvector).
pub fn jacobi_eigen(m: &SymMat) -> (Vec<f64>, Vec<f64>) {
    let p = m.p;
    let mut a = m.data.clone();
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }
    if p == 1 {
        return (vec![a[0]], v);
    }
    let idx = |i: usize, j: usize| i * p + j;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..p {
            for j in (i + 1)..p {
                off += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        let scale = (0..p).map(|i| a[idx(i, i)].abs()).fold(0.0f64, f64::max);
        if off.sqrt() <= 1e-15 * scale.max(1e-300) {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let apq = a[idx(i, j)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[idx(i, i)];
                let aqq = a[idx(j, j)];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let aki = a[idx(k, i)];
                    let akj = a[idx(k, j)];
                    a[idx(k, i)] = c * aki - s * akj;
                    a[idx(k, j)] = s * aki + c * akj;
                }
                for k in 0..p {
                    let aik = a[idx(i, k)];
                    let ajk = a[idx(j, k)];
                    a[idx(i, k)] = c * aik - s * ajk;
                    a[idx(j, k)] = s * aik + c * ajk;
                }
                for k in 0..p {
                    let vki = v[idx(k, i)];
                    let vkj = v[idx(k, j)];
                    v[idx(k, i)] = c * vki - s * vkj;
                    v[idx(k, j)] = s * vki + c * vkj;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..p).map(|i| a[idx(i, i)]).collect();
    // Sort eigenpairs ascending by eigenvalue.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| vals[x].total_cmp(&vals[y]));
    let sorted_vals: Vec<f64> = order.iter().map(|&k| vals[k]).collect();
    let mut sorted_vecs = vec![0.0; p * p];
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..p {
            sorted_vecs[i * p + new_k] = v[idx(i, old_k)];
        }
    }
    vals = sorted_vals;
    (vals, sorted_vecs)
}

/// `y = A x` for a general p x p row-major matrix.
pub fn matvec(a: &[f64], x: &[f64], p: usize) -> Vec<f64> {
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut acc = 0.0;
        for j in 0..p {
            acc += a[i * p + j] * x[j];
        }
        y[i] = acc;
    }
    y
}

/// Determinant of a small general row-major matrix (p <= 3 closed forms,
/// Gaussian elimination above that).
pub fn det(a: &[f64], p: usize) -> f64 {
    match p {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut m = a.to_vec();
            let mut d = 1.0;
            for col in 0..p {
                let mut piv = col;
                for r in (col + 1)..p {
                    if m[r * p + col].abs() > m[piv * p + col].abs() {
                        piv = r;
                    }
                }
                if m[piv * p + col] == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    for c in 0..p {
                        m.swap(col * p + c, piv * p + c);
                    }
                    d = -d;
                }
                d *= m[col * p + col];
                for r in (col + 1)..p {
                    let f = m[r * p + col] / m[col * p + col];
                    for c in col..p {
                        m[r * p + c] -= f * m[col * p + c];
                    }
                }
            }
            d
        }
    }
}

/// Euclidean norm.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_identity() {
        let m = SymMat::from_rows(2, vec![1.0, 0.0, 0.0, 1.0]);
        let vals = m.eigenvalues();
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_known_2x2() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = SymMat::from_rows(2, vec![2.0, 1.0, 1.0, 2.0]);
        let vals = m.eigenvalues();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn quad_form_matches_direct_inverse_2x2() {
        let m = SymMat::from_rows(2, vec![3.0, 1.0, 1.0, 2.0]);
        let x = [1.0, -2.0];
        // inverse of [[3,1],[1,2]] = 1/5 [[2,-1],[-1,3]]
        let expect = {
            let inv = [2.0 / 5.0, -1.0 / 5.0, -1.0 / 5.0, 3.0 / 5.0];
            let y = matvec(&inv, &x, 2);
            x[0] * y[0] + x[1] * y[1]
        };
        let (got, cond) = m.quad_form_inv(&x, "test").unwrap();
        assert!((got - expect).abs() < 1e-12 * expect.abs());
        assert!(cond > 1.0 && cond < 10.0);
    }

    #[test]
    fn singular_is_rejected_with_condition_number() {
        let m = SymMat::from_rows(2, vec![1.0, 1.0, 1.0, 1.0]);
        match m.quad_form_inv(&[1.0, 0.0], "test") {
            Err(SnError::Singular { cond, .. }) => assert!(!cond.is_finite() || cond > COND_LIMIT),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn zero_matrix_is_singular() {
        let m = SymMat::zeros(3);
        assert!(m.quad_form_inv(&[1.0, 0.0, 0.0], "test").is_err());
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        // A = Q L Q' must reproduce the input.
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng_state = crate::rng::splitmix64(rng_state);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for p in 1..=5 {
            let mut m = SymMat::zeros(p);
            for i in 0..p {
                for j in 0..=i {
                    let v = next();
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let (vals, vecs) = jacobi_eigen(&m);
            for i in 0..p {
                for j in 0..p {
                    let mut acc = 0.0;
                    for k in 0..p {
                        acc += vecs[i * p + k] * vals[k] * vecs[j * p + k];
                    }
                    assert!(
                        (acc - m.get(i, j)).abs() < 1e-12,
                        "reconstruction failed at p={p} ({i},{j})"
                    );
                }
            }
        }
    }
}
