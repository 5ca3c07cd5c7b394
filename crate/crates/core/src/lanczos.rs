//! Lanczos iteration with full reorthogonalisation for a handful of extreme
//! eigenpairs of a large sparse symmetric operator.
//!
//! The Krylov basis grows until every selected Ritz pair has residual
//! `|beta_k s_k| <= LANCZOS_TOL * max|theta|`. The start vector comes from a
//! fixed-seed ChaCha8 stream so results are reproducible.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{fix_sign, select_indices, symmetric_eig, SelectedPairs, Selection};

pub const LANCZOS_TOL: f64 = 1e-11;
const START_SEED: u64 = 0x6772_6470_675f_6c7a;
const CHECK_EVERY: usize = 4;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for (yi, mij) in y.iter_mut().zip(self.column(j).iter()) {
                    *yi += mij * xj;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalise(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            axpy(-c, v, w);
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        orthogonalise(&mut v, basis);
        let nv = dot(&v, &v).sqrt();
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Selected extreme eigenpairs of `op`, ordered and signed like
/// [`crate::linalg::symmetric_eig`] followed by the selection.
pub fn partial_eig(op: &dyn SymmetricOperator, sel: Selection) -> Result<SelectedPairs> {
    let n = op.dim();
    let want = sel.requested();
    if want == 0 || want > n {
        return Err(Error::InvalidInput(format!(
            "cannot select {want} eigenpairs of a dimension-{n} operator"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let min_dim = (3 * want + 10).min(n);

    let mut v = random_unit(n, &mut rng, &basis)
        .ok_or_else(|| Error::Numerical("could not draw a start vector".into()))?;
    let mut w = vec![0.0; n];
    loop {
        op.apply(&v, &mut w);
        let a = dot(&v, &w);
        axpy(-a, &v, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(v);
        alpha.push(a);
        orthogonalise(&mut w, &basis);
        let b = dot(&w, &w).sqrt();
        let k = basis.len();
        let scale_est = alpha
            .iter()
            .chain(beta.iter())
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        let exhausted = k == n;
        let breakdown = b <= 1e-13 * scale_est;

        if exhausted || (k >= min_dim && (k % CHECK_EVERY == 0 || breakdown)) {
            if let Some(result) = try_converge(&basis, &alpha, &beta, b, sel, exhausted)? {
                return Ok(result);
            }
        }
        if exhausted {
            return Err(Error::Numerical("Lanczos exhausted the space without converging".into()));
        }
        if breakdown {
            // Invariant subspace found; continue in its orthogonal complement.
            beta.push(0.0);
            v = match random_unit(n, &mut rng, &basis) {
                Some(u) => u,
                None => {
                    return try_converge(&basis, &alpha, &beta[..beta.len() - 1], 0.0, sel, true)?
                        .ok_or_else(|| Error::Numerical("Lanczos restart failed".into()))
                }
            };
        } else {
            beta.push(b);
            v = w.iter().map(|x| x / b).collect();
        }
    }
}

fn try_converge(
    basis: &[Vec<f64>],
    alpha: &[f64],
    beta: &[f64],
    last_beta: f64,
    sel: Selection,
    force: bool,
) -> Result<Option<SelectedPairs>> {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let ritz = symmetric_eig(&t)?;
    let (idx, signature) = match select_indices(&ritz.values, sel) {
        Ok(r) => r,
        Err(e) if force => return Err(e),
        Err(_) => return Ok(None),
    };
    let scale = ritz.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let converged = idx
        .iter()
        .all(|&i| (last_beta * ritz.vectors[(k - 1, i)]).abs() <= LANCZOS_TOL * scale);
    if !converged && !force {
        return Ok(None);
    }
    let n = basis[0].len();
    let mut vectors = DMatrix::zeros(n, idx.len());
    for (col, &i) in idx.iter().enumerate() {
        let mut y = vec![0.0; n];
        for (j, v) in basis.iter().enumerate() {
            axpy(ritz.vectors[(j, i)], v, &mut y);
        }
        let ny = dot(&y, &y).sqrt();
        y.iter_mut().for_each(|x| *x /= ny);
        fix_sign(&mut y);
        vectors.column_mut(col).copy_from_slice(&y);
    }
    let values = idx.iter().map(|&i| ritz.values[i]).collect();
    Ok(Some(SelectedPairs { values, vectors, signature }))
}
