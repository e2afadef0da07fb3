//! Dense vector/matrix primitives shared by every aggregator:
//! normalization, cosine similarity, orthogonal projection, and an
//! SVD-backed least-squares pseudoinverse solve.
//!
//! All arithmetic is in `f64`; the property tolerances elsewhere in the
//! crate assume it.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default epsilon for the normalization and cosine-similarity
/// operators. Both operators share one value.
pub const EPS_DEFAULT: f64 = 1e-8;

/// Relative singular-value cutoff for the pseudoinverse: singular
/// values below `PINV_TRUNCATION * sigma_max` are truncated to zero.
pub const PINV_TRUNCATION: f64 = 1e-12;

/// Below this norm a vector is treated as degenerate (numerically zero)
/// by the orthogonal projection.
const DEGENERATE_NORM: f64 = 1e-150;

#[derive(Debug, Error, PartialEq)]
pub enum VecmathError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector contains a non-finite element at index {index}")]
    NonFinite { index: usize },
    #[error("a gradient set needs at least one row")]
    Empty,
}

/// A dense vector of `f64` gradient components.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    /// Construction path for vectors coming out of a backprop: rejects
    /// NaN/Inf elements.
    pub fn checked(data: Vec<f64>) -> Result<Self, VecmathError> {
        match data.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(VecmathError::NonFinite { index }),
            None => Ok(Self { data }),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `self += c * other`, in place.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Self::from_vec(data)
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Self::from_vec(data.to_vec())
    }
}

/// An ordered collection of `m` loss-specific gradients of shared
/// dimension `k` (the matrix `[g_1 .. g_m]`).
#[derive(Debug, Clone)]
pub struct GradientSet {
    rows: Vec<Vector>,
}

impl GradientSet {
    pub fn new(rows: Vec<Vector>) -> Result<Self, VecmathError> {
        if rows.is_empty() {
            return Err(VecmathError::Empty);
        }
        let k = rows[0].dim();
        for row in &rows[1..] {
            if row.dim() != k {
                return Err(VecmathError::DimensionMismatch {
                    left: k,
                    right: row.dim(),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn num_losses(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].dim()
    }

    pub fn rows(&self) -> &[Vector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Vector {
        &self.rows[i]
    }

    /// The conflict-free linear system is guaranteed solvable when the
    /// parameter dimension is at least the number of losses.
    pub fn solvable_guarantee(&self) -> bool {
        self.num_losses() <= self.dim()
    }
}

/// `v / (|v| + eps)`. The zero vector maps to the zero vector.
pub fn unitize(v: &Vector, eps: f64) -> Vector {
    let denom = v.norm() + eps;
    if denom == 0.0 {
        return v.clone();
    }
    Vector {
        data: v.data.iter().map(|x| x / denom).collect(),
    }
}

/// `a.b / (|a||b| + eps)`. Returns 0 when either vector is zero;
/// errors on a dimension mismatch.
pub fn cosine_similarity(a: &Vector, b: &Vector, eps: f64) -> Result<f64, VecmathError> {
    if a.dim() != b.dim() {
        return Err(VecmathError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(a.dot(b) / (a.norm() * b.norm() + eps))
}

/// The component of `g2` orthogonal to `g1`:
/// `g2 - (g1.g2 / |g1|^2) g1`.
///
/// A numerically zero `g1` has nothing to project onto, so `g2` is
/// returned unchanged.
pub fn orthogonal_component(g1: &Vector, g2: &Vector) -> Vector {
    let norm_sq = g1.dot(g1);
    if norm_sq < DEGENERATE_NORM * DEGENERATE_NORM {
        return g2.clone();
    }
    let mut out = g2.clone();
    out.axpy(-g1.dot(g2) / norm_sq, g1);
    out
}

/// Minimum-norm least-squares solution of `A x = b` via the SVD
/// pseudoinverse of the `m x k` matrix `A` (rows are gradients).
///
/// Singular values below [`PINV_TRUNCATION`] relative to the largest
/// are truncated, so rank deficiency yields the minimum-norm solution
/// rather than an error.
pub fn least_squares_solve(rows: &[Vector], b: &[f64]) -> Vector {
    assert!(!rows.is_empty(), "least_squares_solve needs rows");
    assert_eq!(rows.len(), b.len(), "rhs length must match row count");
    let m = rows.len();
    let k = rows[0].dim();
    let a = DMatrix::from_fn(m, k, |i, j| rows[i][j]);
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_TRUNCATION * sigma_max;

    // x = V * diag(1/sigma) * U^T * b, with small sigmas dropped.
    let b = DVector::from_column_slice(b);
    let ut_b = u.transpose() * b;
    let mut x = DVector::zeros(k);
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > cutoff && sigma > 0.0 {
            let coeff = ut_b[i] / sigma;
            x.axpy(coeff, &v_t.row(i).transpose(), 1.0);
        }
    }
    Vector::from_vec(x.data.into())
}

/// Numerical rank of the matrix whose rows are the given vectors,
/// using the same relative cutoff as the pseudoinverse.
pub fn numerical_rank(rows: &[Vector]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = rows.len();
    let k = rows[0].dim();
    let a = DMatrix::from_fn(m, k, |i, j| rows[i][j]);
    let svd = a.svd(false, false);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_TRUNCATION * sigma_max;
    svd.singular_values
        .iter()
        .filter(|&&s| s > cutoff && s > 0.0)
        .count()
}
