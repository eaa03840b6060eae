//! Small dense square matrices and covariance storage.
//!
//! Feature dimensions in this crate are tiny (typically 1 to 8), so everything
//! here is plain row-major `Vec<f64>` arithmetic with Cholesky factorizations
//! and a cyclic Jacobi eigen-solver for flooring full covariances.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")
)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("matrix rows"));
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.get(i, j) == 0.0))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.n, other.n)?;
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        Ok((0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.n, other.n)?;
        Ok(Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.n, other.n)?;
        Ok(Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Averages the matrix with its transpose.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Lower-triangular Cholesky factor; fails unless strictly positive definite.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        Ok(Cholesky { l })
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns eigenvalues and the matrix whose columns are the eigenvectors.
    pub fn symmetric_eigen(&self) -> (Vec<f64>, Matrix) {
        let n = self.n;
        let mut a = self.symmetrized();
        let mut v = Matrix::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.get(i, j) * a.get(i, j);
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        (a.diagonal(), v)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.rows()
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.n).map(|i| self.l.get(i, i).ln()).sum::<f64>()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Squared Mahalanobis norm `bᵀ A⁻¹ b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let n = self.l.n;
        let mut y = vec![0.0; n];
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
            acc += y[i] * y[i];
        }
        acc
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.l.n;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv.symmetrized()
    }
}

/// Covariance in diagonal (variance vector) or full (matrix) storage.
///
/// Values of this type are raw second moments: zero entries are legal and
/// denote a dirac factor. Flooring happens when a [`crate::Gaussian`] is built.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Covariance {
    Diagonal(Vec<f64>),
    Full(Matrix),
}

impl Covariance {
    pub fn zeros(dim: usize) -> Self {
        Covariance::Diagonal(vec![0.0; dim])
    }

    pub fn isotropic(dim: usize, variance: f64) -> Self {
        Covariance::Diagonal(vec![variance; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(v) => v.len(),
            Covariance::Full(m) => m.dim(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Covariance::Diagonal(_))
    }

    /// Diagonal entries regardless of storage.
    pub fn variances(&self) -> Vec<f64> {
        match self {
            Covariance::Diagonal(v) => v.clone(),
            Covariance::Full(m) => m.diagonal(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            Covariance::Diagonal(v) => Matrix::from_diagonal(v),
            Covariance::Full(m) => m.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Covariance::Diagonal(v) => v.iter().all(|&x| x == 0.0),
            Covariance::Full(m) => m.data.iter().all(|&x| x == 0.0),
        }
    }

    pub fn add(&self, other: &Covariance) -> Result<Covariance> {
        check_dim(self.dim(), other.dim())?;
        Ok(match (self, other) {
            (Covariance::Diagonal(a), Covariance::Diagonal(b)) => {
                Covariance::Diagonal(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => Covariance::Full(self.to_matrix().add(&other.to_matrix())?),
        })
    }

    /// `A C Aᵀ`; diagonal storage survives when `A` is diagonal.
    pub fn transform(&self, a: &Matrix) -> Result<Covariance> {
        check_dim(self.dim(), a.dim())?;
        if let (Covariance::Diagonal(v), true) = (self, a.is_diagonal()) {
            return Ok(Covariance::Diagonal(
                v.iter().enumerate().map(|(i, c)| a.get(i, i) * c * a.get(i, i)).collect(),
            ));
        }
        let ac = a.mul(&self.to_matrix())?;
        Ok(Covariance::Full(ac.mul(&a.transpose())?.symmetrized()))
    }

    /// Elementwise scaling of a diagonal covariance by `g_d²`, or `G C Gᵀ` for `G = diag(g)`.
    pub fn scale_by_gain(&self, gain: &[f64]) -> Result<Covariance> {
        self.transform(&Matrix::from_diagonal(gain))
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Covariance::Diagonal(v) => v.iter().all(|x| x.is_finite()),
            Covariance::Full(m) => m.is_finite(),
        }
    }

    /// Rejects negative variances and asymmetric matrices; zero is allowed.
    pub fn validate_psd(&self) -> Result<()> {
        match self {
            Covariance::Diagonal(v) => {
                if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
            Covariance::Full(m) => {
                if !m.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                let (vals, _) = m.symmetric_eigen();
                let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                if vals.iter().any(|&v| v < -1e-12 * scale) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        Ok(())
    }

    /// Raises every variance (or eigenvalue) below `floor` to `floor`.
    ///
    /// Negative diagonal variances and clearly indefinite matrices are rejected
    /// rather than floored.
    pub fn floored(&self, floor: f64) -> Result<Covariance> {
        match self {
            Covariance::Diagonal(v) => {
                let mut out = Vec::with_capacity(v.len());
                for &x in v {
                    if !(x >= 0.0) || !x.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    out.push(x.max(floor));
                }
                Ok(Covariance::Diagonal(out))
            }
            Covariance::Full(m) => {
                if !m.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                let (vals, vecs) = m.symmetric_eigen();
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                if min >= floor {
                    return Ok(Covariance::Full(m.symmetrized()));
                }
                let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                if min < -1e-9 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
                let n = m.dim();
                let mut out = Matrix::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += vecs.get(i, k) * vals[k].max(floor) * vecs.get(j, k);
                        }
                        out.set(i, j, acc);
                    }
                }
                Ok(Covariance::Full(out.symmetrized()))
            }
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd() -> Matrix {
        Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]).unwrap()
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd();
        let c = a.cholesky().unwrap();
        let l = c.factor();
        let back = l.mul(&l.transpose()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(back.get(i, j), a.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = spd();
        let inv = a.cholesky().unwrap().inverse();
        let id = a.mul(&inv).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(id.get(i, j), e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_eigenvalues_sum_to_trace() {
        let a = spd();
        let (vals, vecs) = a.symmetric_eigen();
        assert_relative_eq!(vals.iter().sum::<f64>(), 9.0, epsilon = 1e-12);
        // A v = λ v for every column.
        for k in 0..3 {
            let v: Vec<f64> = (0..3).map(|i| vecs.get(i, k)).collect();
            let av = a.mul_vec(&v).unwrap();
            for i in 0..3 {
                assert_relative_eq!(av[i], vals[k] * v[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(m.cholesky().unwrap_err(), Error::NotPositiveDefinite);
        assert_eq!(Covariance::Full(m).floored(1e-8).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn floor_raises_small_eigenvalues_only() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let f = Covariance::Full(m).floored(1e-3).unwrap();
        let (vals, _) = f.to_matrix().symmetric_eigen();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(min, 1e-3, epsilon = 1e-12);
        let diag = Covariance::Diagonal(vec![0.0, 2.0]).floored(1e-8).unwrap();
        assert_eq!(diag, Covariance::Diagonal(vec![1e-8, 2.0]));
        assert!(Covariance::Diagonal(vec![-1.0]).floored(1e-8).is_err());
    }

    #[test]
    fn diagonal_transform_keeps_storage() {
        let c = Covariance::Diagonal(vec![1.0, 2.0]);
        let a = Matrix::from_diagonal(&[2.0, 3.0]);
        assert_eq!(c.transform(&a).unwrap(), Covariance::Diagonal(vec![4.0, 18.0]));
        let rot = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let t = c.transform(&rot).unwrap();
        assert_eq!(t.variances(), vec![2.0, 1.0]);
        assert!(!t.is_diagonal());
    }
}
