//! The indefinite metric `I_{p,q} = diag(1, .., 1, -1, .., -1)` and the
//! bilinear form it induces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of `+1` and `-1` entries of the metric. `q == 0` is the ordinary
/// (positive definite) dot product case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub p: usize,
    pub q: usize,
}

impl Signature {
    pub fn new(p: usize, q: usize) -> Self {
        Signature { p, q }
    }

    pub fn d(&self) -> usize {
        self.p + self.q
    }

    /// `+1.0` for the first `p` coordinates, `-1.0` for the rest.
    #[inline]
    pub fn sign(&self, j: usize) -> f64 {
        if j < self.p {
            1.0
        } else {
            -1.0
        }
    }

    pub fn metric(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d(), self.d(), |i, j| if i == j { self.sign(i) } else { 0.0 })
    }

    pub fn metric_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.d(), |i, _| self.sign(i))
    }

    /// Checks that the signature can parameterise a graph model (`p >= 1`).
    pub fn validate_model(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidInput(format!(
                "signature ({}, {}) has no positive part",
                self.p, self.q
            )));
        }
        Ok(())
    }

    /// `x^T I_{p,q} y` on slices.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        indefinite_inner(x, y, *self)
    }

    /// Flips the sign of the trailing `q` columns of `m` in place
    /// (right multiplication by `I_{p,q}`).
    pub fn apply_right(&self, m: &mut DMatrix<f64>) {
        for j in self.p..self.d().min(m.ncols()) {
            m.column_mut(j).neg_mut();
        }
    }
}

impl std::fmt::Display for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.p, self.q)
    }
}

/// `sum_{j<p} x_j y_j - sum_{j>=p} x_j y_j`.
pub fn indefinite_inner(x: &[f64], y: &[f64], sig: Signature) -> Result<f64> {
    if x.len() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: x.len() });
    }
    if y.len() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: y.len() });
    }
    let mut acc = 0.0;
    for j in 0..sig.d() {
        acc += sig.sign(j) * x[j] * y[j];
    }
    Ok(acc)
}

/// Row Gram matrix `A I_{p,q} B^T` for row-stacked point sets.
pub fn indefinite_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, sig: Signature) -> Result<DMatrix<f64>> {
    if a.ncols() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: a.ncols() });
    }
    if b.ncols() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: b.ncols() });
    }
    let mut a_signed = a.clone();
    sig.apply_right(&mut a_signed);
    Ok(a_signed * b.transpose())
}

/// `M I_{p,q} M^T - I_{p,q}` measured in spectral norm; zero for members of O(p,q).
pub fn group_residual(m: &DMatrix<f64>, sig: Signature) -> f64 {
    let metric = sig.metric();
    let r = m * &metric * m.transpose() - metric;
    crate::linalg::spectral_norm(&r)
}
