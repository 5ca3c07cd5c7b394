//! Dense symmetric eigendecomposition and the eigenpair selection rules
//! shared by every spectral embedding in the crate.
//!
//! Conventions:
//! - eigenvalues of a full decomposition are reported in descending
//!   algebraic order;
//! - every eigenvector is signed so that its entry of largest absolute value
//!   is positive (ties go to the lowest index);
//! - a selected set of eigenpairs is laid out positives first (descending),
//!   then negatives by descending magnitude, so the `I_{p,q}` blocks are
//!   contiguous.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::signature::Signature;

/// Relative threshold below which an eigenvalue counts as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

/// Relative threshold under which two magnitudes are treated as tied.
pub const MAGNITUDE_TIE_TOL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// A retained subset of eigenpairs in embedding column order.
#[derive(Debug, Clone)]
pub struct SelectedPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub signature: Signature,
}

/// Which eigenpairs an embedding keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// The `d` eigenvalues of largest magnitude.
    Magnitude(usize),
    /// The `p` largest positive and the `q` most negative eigenvalues.
    Signature(Signature),
    /// The `d` algebraically largest eigenvalues, keeping only positive ones.
    PositiveAlgebraic(usize),
}

impl Selection {
    pub fn requested(&self) -> usize {
        match *self {
            Selection::Magnitude(d) | Selection::PositiveAlgebraic(d) => d,
            Selection::Signature(sig) => sig.d(),
        }
    }
}

/// Full eigendecomposition of a real symmetric matrix.
///
/// Inputs that are symmetric up to `1e-10` (relative to the largest entry)
/// are symmetrised by averaging; anything further off is rejected.
pub fn symmetric_eig(m: &DMatrix<f64>) -> Result<EigenPairs> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenPairs { values: vec![], vectors: DMatrix::zeros(0, 0) });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (max |M - M^T| = {asym:e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        fix_sign(vectors.column_mut(dst).as_mut_slice());
    }
    Ok(EigenPairs { values, vectors })
}

/// Signs `v` so that its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let cut = max * (1.0 - MAGNITUDE_TIE_TOL);
    if let Some(lead) = v.iter().position(|x| x.abs() >= cut) {
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Picks eigenvalue indices according to `sel`.
///
/// `values` must be in descending algebraic order; positions in it are the
/// "original index" used to break ties. Returns indices in embedding column
/// order and the resulting signature.
pub fn select_indices(values: &[f64], sel: Selection) -> Result<(Vec<usize>, Signature)> {
    let scale = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::DegenerateSpectrum("all eigenvalues are zero".into()));
    }
    let zero_tol = ZERO_EIGENVALUE_TOL * scale;
    let tie_tol = MAGNITUDE_TIE_TOL * scale;
    let positives: Vec<usize> = (0..values.len()).filter(|&i| values[i] > zero_tol).collect();
    let mut negatives: Vec<usize> = (0..values.len()).filter(|&i| values[i] < -zero_tol).collect();
    negatives.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let (pos, neg) = match sel {
        Selection::Magnitude(d) => {
            let nonzero = positives.len() + negatives.len();
            if d == 0 {
                return Err(Error::InvalidInput("embedding dimension must be at least 1".into()));
            }
            if nonzero < d {
                return Err(Error::DegenerateSpectrum(format!(
                    "only {nonzero} nonzero eigenvalues, {d} requested"
                )));
            }
            // Merge the two sorted runs; on a magnitude tie the positive wins,
            // within a sign the lower index wins (already sorted that way).
            let (mut i, mut j) = (0, 0);
            while i + j < d {
                let take_pos = match (positives.get(i), negatives.get(j)) {
                    (Some(&a), Some(&b)) => values[a].abs() >= values[b].abs() - tie_tol,
                    (Some(_), None) => true,
                    (None, _) => false,
                };
                if take_pos {
                    i += 1;
                } else {
                    j += 1;
                }
            }
            let next = match (positives.get(i), negatives.get(j)) {
                (Some(&a), Some(&b)) => Some(values[a].abs().max(values[b].abs())),
                (Some(&a), None) => Some(values[a].abs()),
                (None, Some(&b)) => Some(values[b].abs()),
                (None, None) => None,
            };
            if let Some(next) = next {
                let last = [
                    i.checked_sub(1).map(|k| values[positives[k]].abs()),
                    j.checked_sub(1).map(|k| values[negatives[k]].abs()),
                ]
                .into_iter()
                .flatten()
                .fold(f64::INFINITY, f64::min);
                if (last - next).abs() <= tie_tol {
                    log::warn!(
                        "ambiguous cutoff: eigenvalue magnitudes at positions {d} and {} coincide ({last:e})",
                        d + 1
                    );
                }
            }
            (i, j)
        }
        Selection::Signature(sig) => {
            if sig.d() == 0 {
                return Err(Error::InvalidInput("signature (0, 0) selects nothing".into()));
            }
            if positives.len() < sig.p || negatives.len() < sig.q {
                return Err(Error::DegenerateSpectrum(format!(
                    "signature {sig} requested but spectrum has {} positive and {} negative nonzero eigenvalues",
                    positives.len(),
                    negatives.len()
                )));
            }
            (sig.p, sig.q)
        }
        Selection::PositiveAlgebraic(d) => {
            if d == 0 {
                return Err(Error::InvalidInput("embedding dimension must be at least 1".into()));
            }
            if positives.is_empty() {
                return Err(Error::DegenerateSpectrum("no positive eigenvalues".into()));
            }
            if positives.len() < d {
                log::warn!("only {} positive eigenvalues, {d} requested", positives.len());
            }
            (d.min(positives.len()), 0)
        }
    };
    let mut idx = Vec::with_capacity(pos + neg);
    idx.extend_from_slice(&positives[..pos]);
    idx.extend_from_slice(&negatives[..neg]);
    Ok((idx, Signature::new(pos, neg)))
}

impl EigenPairs {
    pub fn select(&self, sel: Selection) -> Result<SelectedPairs> {
        let (idx, signature) = select_indices(&self.values, sel)?;
        let values = idx.iter().map(|&i| self.values[i]).collect();
        let vectors = self.vectors.select_columns(&idx);
        Ok(SelectedPairs { values, vectors, signature })
    }
}

/// The `d` eigenpairs of largest magnitude, positives first.
pub fn select_top_by_magnitude(pairs: &EigenPairs, d: usize) -> Result<SelectedPairs> {
    if d > pairs.values.len() {
        return Err(Error::InvalidInput(format!(
            "cannot select {d} eigenpairs out of {}",
            pairs.values.len()
        )));
    }
    pairs.select(Selection::Magnitude(d))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Orthogonal polar factor `W_1 W_2^T` of `m = W_1 Σ W_2^T`.
pub fn polar_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("polar factor needs a square matrix".into()));
    }
    if m.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let svd = m.clone().svd(true, true);
    let smin = svd.singular_values.min();
    if smin < 1e-12 {
        return Err(Error::DegenerateAlignment(format!(
            "block has singular value {smin:e}"
        )));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    Ok(u * v_t)
}

/// Nonzero eigenpairs of the rank-`d` matrix `X I_{p,q} X^T` without forming
/// it: a thin QR of `X` reduces the problem to `d x d`.
pub fn low_rank_indefinite_eig(x: &DMatrix<f64>, sig: Signature) -> Result<SelectedPairs> {
    if x.ncols() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: x.ncols() });
    }
    if x.nrows() < sig.d() {
        return Err(Error::RankDeficient(format!(
            "{} rows cannot span dimension {}",
            x.nrows(),
            sig.d()
        )));
    }
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let mut r_signed = r.clone();
    sig.apply_right(&mut r_signed);
    let core = r_signed * r.transpose();
    let core = (&core + core.transpose()) * 0.5;
    let small = symmetric_eig(&core)?;
    let scale = small.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if small.values.iter().any(|v| v.abs() <= ZERO_EIGENVALUE_TOL * scale) || scale == 0.0 {
        return Err(Error::RankDeficient(format!(
            "X I X^T has eigenvalues {:?}; rank below {}",
            small.values,
            sig.d()
        )));
    }
    let sel = small.select(Selection::Signature(sig)).map_err(|_| {
        Error::RankDeficient(format!(
            "X I X^T has eigenvalues {:?}, inconsistent with signature {sig}",
            small.values
        ))
    })?;
    let mut u = q * sel.vectors;
    for mut col in u.column_iter_mut() {
        fix_sign(col.as_mut_slice());
    }
    Ok(SelectedPairs { values: sel.values, vectors: u, signature: sig })
}
