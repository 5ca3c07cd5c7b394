//! Limiting covariances of adjacency and Laplacian embeddings, and
//! coverage of the resulting confidence ellipses.
//!
//! For a discrete latent distribution the expectations are finite sums. For
//! a Dirichlet mixture the adjacency expectation is a polynomial of degree
//! at most four in the membership vector and is evaluated exactly from
//! Dirichlet moments; the Laplacian expectation is a rational function and
//! is estimated by fixed-seed Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{draw_dirichlet, BlockModelParams, Mixture};
use crate::signature::Signature;

/// Monte Carlo sample size for Dirichlet-mixture Laplacian covariances.
pub const MC_SAMPLES: usize = 1_000_000;
pub const MC_SEED: u64 = 20_180_901;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Edge probabilities bounded away from zero: keep the `(1 - t)` factor.
    Dense,
    /// Vanishing sparsity factor: drop it.
    Sparse,
}

impl Regime {
    #[inline]
    fn variance(self, t: f64) -> f64 {
        match self {
            Regime::Dense => t * (1.0 - t),
            Regime::Sparse => t,
        }
    }
}

/// Distribution of a single latent position.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentDistribution {
    /// Point masses at the rows of `atoms` with probabilities `weights`.
    Discrete { atoms: DMatrix<f64>, weights: Vec<f64>, signature: Signature },
    /// `sum_k pi_k v_k` with `pi ~ Dirichlet(alpha)` and `v_k` the rows of `vertices`.
    DirichletMixture { alpha: Vec<f64>, vertices: DMatrix<f64>, signature: Signature },
}

impl LatentDistribution {
    pub fn discrete(atoms: DMatrix<f64>, weights: Vec<f64>, signature: Signature) -> Result<Self> {
        if atoms.ncols() != signature.d() {
            return Err(Error::DimensionMismatch { expected: signature.d(), got: atoms.ncols() });
        }
        if weights.len() != atoms.nrows() {
            return Err(Error::DimensionMismatch { expected: atoms.nrows(), got: weights.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("atom weights must be nonnegative and sum to 1".into()));
        }
        Ok(LatentDistribution::Discrete { atoms, weights, signature })
    }

    pub fn dirichlet_mixture(alpha: Vec<f64>, vertices: DMatrix<f64>, signature: Signature) -> Result<Self> {
        if vertices.ncols() != signature.d() {
            return Err(Error::DimensionMismatch { expected: signature.d(), got: vertices.ncols() });
        }
        if alpha.len() != vertices.nrows() {
            return Err(Error::DimensionMismatch { expected: vertices.nrows(), got: alpha.len() });
        }
        if alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidInput("Dirichlet concentrations must be positive".into()));
        }
        Ok(LatentDistribution::DirichletMixture { alpha, vertices, signature })
    }

    /// Latent distribution of a block model: point masses at the scaled
    /// community vectors, or Dirichlet mixtures of them.
    pub fn from_params(params: &BlockModelParams) -> Result<Self> {
        let atoms = params.scaled_vectors();
        match &params.mixture {
            Mixture::Weights(w) => Self::discrete(atoms, w.clone(), params.signature()),
            Mixture::Dirichlet(a) => Self::dirichlet_mixture(a.clone(), atoms, params.signature()),
        }
    }

    pub fn signature(&self) -> Signature {
        match self {
            LatentDistribution::Discrete { signature, .. } | LatentDistribution::DirichletMixture { signature, .. } => {
                *signature
            }
        }
    }

    fn d(&self) -> usize {
        self.signature().d()
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            LatentDistribution::Discrete { atoms, weights, .. } => {
                atoms.transpose() * DVector::from_column_slice(weights)
            }
            LatentDistribution::DirichletMixture { alpha, vertices, .. } => {
                let a0: f64 = alpha.iter().sum();
                vertices.transpose() * DVector::from_iterator(alpha.len(), alpha.iter().map(|a| a / a0))
            }
        }
    }

    /// `E[xi xi^T]` without the conditioning check.
    fn raw_second_moment(&self) -> DMatrix<f64> {
        match self {
            LatentDistribution::Discrete { atoms, weights, .. } => {
                let mut out = DMatrix::zeros(self.d(), self.d());
                for (k, &w) in weights.iter().enumerate() {
                    let v = atoms.row(k).transpose();
                    out += &v * v.transpose() * w;
                }
                out
            }
            LatentDistribution::DirichletMixture { alpha, vertices, .. } => {
                let m = dirichlet_outer_moment(alpha);
                vertices.transpose() * m * vertices
            }
        }
    }
}

/// Rising factorial `a (a+1) ... (a+n-1)`.
fn rising(a: f64, n: usize) -> f64 {
    (0..n).map(|i| a + i as f64).product()
}

/// `E[prod_k pi_k^{counts_k}]` for `pi ~ Dirichlet(alpha)`.
pub fn dirichlet_moment(alpha: &[f64], counts: &[usize]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let total: usize = counts.iter().sum();
    let num: f64 = alpha.iter().zip(counts).map(|(&a, &c)| rising(a, c)).product();
    num / rising(a0, total)
}

/// `E[pi pi^T] = (diag(alpha) + alpha alpha^T) / (a0 (a0 + 1))`.
pub fn dirichlet_outer_moment(alpha: &[f64]) -> DMatrix<f64> {
    let k = alpha.len();
    let a0: f64 = alpha.iter().sum();
    DMatrix::from_fn(k, k, |i, j| {
        let diag = if i == j { alpha[i] } else { 0.0 };
        (diag + alpha[i] * alpha[j]) / (a0 * (a0 + 1.0))
    })
}

fn counts_of(alpha_len: usize, idx: &[usize]) -> Vec<usize> {
    let mut c = vec![0; alpha_len];
    for &i in idx {
        c[i] += 1;
    }
    c
}

/// `Δ = E[xi xi^T]`, rejecting condition numbers above `1e12`.
pub fn second_moment(dist: &LatentDistribution) -> Result<DMatrix<f64>> {
    let delta = dist.raw_second_moment();
    check_invertible(&delta)?;
    Ok(delta)
}

fn check_invertible(m: &DMatrix<f64>) -> Result<()> {
    let sv = m.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularMoment(cond));
    }
    Ok(())
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_invertible(m)?;
    m.clone().try_inverse().ok_or(Error::SingularMoment(f64::INFINITY))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `I Δ^{-1} M Δ^{-1} I`, symmetrised.
fn conjugate(sig: Signature, delta_inv: &DMatrix<f64>, middle: &DMatrix<f64>) -> DMatrix<f64> {
    let metric = sig.metric();
    symmetrize(&metric * delta_inv * middle * delta_inv * &metric)
}

fn check_point(x: &[f64], sig: Signature) -> Result<DVector<f64>> {
    if x.len() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: x.len() });
    }
    Ok(DVector::from_column_slice(x))
}

/// Limiting covariance of the aligned adjacency embedding at latent position `x`.
pub fn ase_covariance(x: &[f64], dist: &LatentDistribution, regime: Regime) -> Result<DMatrix<f64>> {
    let sig = dist.signature();
    let x = check_point(x, sig)?;
    let delta_inv = inverse(&dist.raw_second_moment())?;
    let d = sig.d();
    let ix = sig.metric_diagonal().component_mul(&x);
    let middle = match dist {
        LatentDistribution::Discrete { atoms, weights, .. } => {
            let mut m = DMatrix::zeros(d, d);
            for (k, &w) in weights.iter().enumerate() {
                let v = atoms.row(k).transpose();
                let t = ix.dot(&v);
                m += &v * v.transpose() * (w * regime.variance(t));
            }
            m
        }
        LatentDistribution::DirichletMixture { alpha, vertices, .. } => {
            // t = a^T pi with a = V I x; E[f(t) pi pi^T] from 3rd and 4th moments
            let k = alpha.len();
            let a = vertices * &ix;
            let mut inner = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in i..k {
                    let mut first = 0.0;
                    let mut second = 0.0;
                    for r in 0..k {
                        first += a[r] * dirichlet_moment(alpha, &counts_of(k, &[i, j, r]));
                        if regime == Regime::Dense {
                            for s in 0..k {
                                second +=
                                    a[r] * a[s] * dirichlet_moment(alpha, &counts_of(k, &[i, j, r, s]));
                            }
                        }
                    }
                    inner[(i, j)] = first - second;
                    inner[(j, i)] = first - second;
                }
            }
            vertices.transpose() * inner * vertices
        }
    };
    Ok(conjugate(sig, &delta_inv, &middle))
}

/// Monte Carlo settings for the Laplacian covariance of Dirichlet mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo { samples: MC_SAMPLES, seed: MC_SEED }
    }
}

/// Limiting covariance of the aligned Laplacian embedding at latent position
/// `x`, using [`MonteCarlo::default`] for Dirichlet mixtures.
pub fn lse_covariance(x: &[f64], dist: &LatentDistribution, regime: Regime) -> Result<DMatrix<f64>> {
    lse_covariance_with(x, dist, regime, MonteCarlo::default())
}

pub fn lse_covariance_with(
    x: &[f64],
    dist: &LatentDistribution,
    regime: Regime,
    mc: MonteCarlo,
) -> Result<DMatrix<f64>> {
    let sig = dist.signature();
    let x = check_point(x, sig)?;
    let metric = sig.metric_diagonal();
    let mu = dist.mean();
    let i_mu = metric.component_mul(&mu);
    let x_mu = i_mu.dot(&x);
    if !(x_mu > 0.0) {
        return Err(Error::LseAssumption(format!("x^T I mu = {x_mu} is not positive")));
    }
    let ix = metric.component_mul(&x);

    // Support points with weights: exact atoms, or Monte Carlo draws.
    let (points, weights): (DMatrix<f64>, Vec<f64>) = match dist {
        LatentDistribution::Discrete { atoms, weights, .. } => {
            for (k, &w) in weights.iter().enumerate() {
                let denom = i_mu.dot(&atoms.row(k).transpose());
                if w > 0.0 && !(denom > 0.0) {
                    return Err(Error::LseAssumption(format!(
                        "mu^T I v = {denom} is not positive for atom {k}"
                    )));
                }
            }
            (atoms.clone(), weights.clone())
        }
        LatentDistribution::DirichletMixture { alpha, vertices, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
            let pi = draw_dirichlet(alpha, mc.samples, &mut rng)?;
            let xi = pi * vertices;
            let keep: Vec<usize> =
                (0..xi.nrows()).filter(|&i| i_mu.dot(&xi.row(i).transpose()) > 0.0).collect();
            if keep.len() < xi.nrows() {
                log::warn!("rejected {} draws with mu^T I xi <= 0", xi.nrows() - keep.len());
            }
            if keep.is_empty() {
                return Err(Error::LseAssumption("mu^T I xi <= 0 on every draw".into()));
            }
            let w = 1.0 / keep.len() as f64;
            (xi.select_rows(&keep), vec![w; keep.len()])
        }
    };

    lse_from_support(sig, &ix, &i_mu, x_mu, &points, &weights, regime)
}

fn lse_from_support(
    sig: Signature,
    ix: &DVector<f64>,
    i_mu: &DVector<f64>,
    x_mu: f64,
    points: &DMatrix<f64>,
    weights: &[f64],
    regime: Regime,
) -> Result<DMatrix<f64>> {
    let d = sig.d();
    let mut delta_tilde = DMatrix::zeros(d, d);
    for (k, &w) in weights.iter().enumerate() {
        let v = points.row(k).transpose();
        delta_tilde += &v * v.transpose() * (w / i_mu.dot(&v));
    }
    let dt_inv = inverse(&delta_tilde)?;
    let shift = &delta_tilde * ix / (2.0 * x_mu);
    let mut middle = DMatrix::zeros(d, d);
    for (k, &w) in weights.iter().enumerate() {
        let v = points.row(k).transpose();
        let t = ix.dot(&v);
        let g = &v / i_mu.dot(&v) - &shift;
        middle += &g * g.transpose() * (w * regime.variance(t) / x_mu);
    }
    Ok(conjugate(sig, &dt_inv, &middle))
}

/// Entrywise Monte Carlo standard error of [`lse_covariance_with`] for a
/// Dirichlet mixture, from `batches` independent batches splitting the
/// sample budget. Discrete distributions are exact and give zeros.
pub fn lse_covariance_standard_error(
    x: &[f64],
    dist: &LatentDistribution,
    regime: Regime,
    mc: MonteCarlo,
    batches: usize,
) -> Result<DMatrix<f64>> {
    let d = dist.signature().d();
    if matches!(dist, LatentDistribution::Discrete { .. }) {
        return Ok(DMatrix::zeros(d, d));
    }
    if batches < 2 || mc.samples / batches == 0 {
        return Err(Error::InvalidInput(format!("cannot split {} samples into {batches} batches", mc.samples)));
    }
    let estimates = (0..batches)
        .map(|b| {
            let batch = MonteCarlo { samples: mc.samples / batches, seed: mc.seed.wrapping_add(1 + b as u64) };
            lse_covariance_with(x, dist, regime, batch)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = batches as f64;
    let mean = estimates.iter().fold(DMatrix::zeros(d, d), |a, e| a + e) / k;
    let var = estimates.iter().fold(DMatrix::zeros(d, d), |a, e| a + (e - &mean).map(|v| v * v)) / (k - 1.0);
    // each batch holds 1/k of the samples, so the full estimate has 1/k of the batch variance
    Ok(var.map(|v| (v / k).sqrt()))
}

/// `(p - c)^T Σ^{-1} (p - c)`.
pub fn mahalanobis_squared(point: &[f64], center: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    if point.len() != center.len() || cov.nrows() != point.len() || cov.ncols() != point.len() {
        return Err(Error::DimensionMismatch { expected: point.len(), got: cov.nrows() });
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let diff = DVector::from_iterator(point.len(), point.iter().zip(center).map(|(p, c)| p - c));
    let z = chol.l().solve_lower_triangular(&diff).ok_or_else(|| Error::Numerical("singular covariance".into()))?;
    Ok(z.norm_squared())
}

/// Chi-squared quantile with `d` degrees of freedom.
pub fn chi_squared_quantile(d: usize, level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidInput(format!("level {level} outside [0, 1]")));
    }
    let dist = ChiSquared::new(d as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(dist.inverse_cdf(level))
}

/// Fraction of rows of `points` whose Mahalanobis distance to the matching
/// row of `centers` under `covariances[i]` lies within the `level` ellipse.
pub fn empirical_ellipse_coverage(
    points: &DMatrix<f64>,
    centers: &DMatrix<f64>,
    covariances: &[DMatrix<f64>],
    level: f64,
) -> Result<f64> {
    let m = points.nrows();
    if centers.shape() != points.shape() {
        return Err(Error::DimensionMismatch { expected: m, got: centers.nrows() });
    }
    if covariances.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: covariances.len() });
    }
    if m == 0 {
        return Err(Error::InvalidInput("no points".into()));
    }
    let cutoff = chi_squared_quantile(points.ncols(), level)?;
    let mut covered = 0usize;
    for i in 0..m {
        let p: Vec<f64> = points.row(i).iter().copied().collect();
        let c: Vec<f64> = centers.row(i).iter().copied().collect();
        if mahalanobis_squared(&p, &c, &covariances[i])? <= cutoff {
            covered += 1;
        }
    }
    Ok(covered as f64 / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{kernel_factorize, three_block_matrix, two_block_matrix};
    use rand::Rng;

    fn two_block_dist() -> LatentDistribution {
        let f = kernel_factorize(&two_block_matrix(), None).unwrap();
        LatentDistribution::discrete(f.vectors, vec![0.2, 0.8], f.signature).unwrap()
    }

    fn three_block_dist() -> LatentDistribution {
        let f = kernel_factorize(&three_block_matrix(), None).unwrap();
        LatentDistribution::dirichlet_mixture(vec![1.0, 0.5, 0.5], f.vectors, f.signature).unwrap()
    }

    fn is_psd(m: &DMatrix<f64>) -> bool {
        let e = nalgebra::SymmetricEigen::new(m.clone());
        e.eigenvalues.iter().all(|&v| v >= -1e-10)
    }

    #[test]
    fn single_atom_moments() {
        let v = DMatrix::from_row_slice(1, 2, &[0.6, 0.3]);
        let dist = LatentDistribution::discrete(v.clone(), vec![1.0], Signature::new(1, 1)).unwrap();
        let raw = dist.raw_second_moment();
        assert!((raw - v.transpose() * &v).amax() < 1e-15);
        // rank one in two dimensions
        assert!(matches!(second_moment(&dist), Err(Error::SingularMoment(_))));
    }

    #[test]
    fn two_atom_moment() {
        let dist = two_block_dist();
        let LatentDistribution::Discrete { atoms, .. } = &dist else { unreachable!() };
        let v1 = atoms.row(0).transpose();
        let v2 = atoms.row(1).transpose();
        let expect = &v1 * v1.transpose() * 0.2 + &v2 * v2.transpose() * 0.8;
        assert!((second_moment(&dist).unwrap() - expect).amax() < 1e-15);
    }

    #[test]
    fn dirichlet_moment_formulas() {
        let alpha = [1.0, 0.5, 0.5];
        // E[pi_1] = 1/2, E[pi_1^2] = 1*2/(2*3)
        assert!((dirichlet_moment(&alpha, &[1, 0, 0]) - 0.5).abs() < 1e-15);
        assert!((dirichlet_moment(&alpha, &[2, 0, 0]) - 1.0 / 3.0).abs() < 1e-15);
        let outer = dirichlet_outer_moment(&alpha);
        for i in 0..3 {
            for j in 0..3 {
                let mut c = [0usize; 3];
                c[i] += 1;
                c[j] += 1;
                assert!((outer[(i, j)] - dirichlet_moment(&alpha, &c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dirichlet_second_moment_matches_monte_carlo() {
        let dist = three_block_dist();
        let exact = second_moment(&dist).unwrap();
        let LatentDistribution::DirichletMixture { alpha, vertices, .. } = &dist else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let xi = draw_dirichlet(alpha, n, &mut rng).unwrap() * vertices;
        for a in 0..3 {
            for b in 0..3 {
                let vals: Vec<f64> = (0..n).map(|i| xi[(i, a)] * xi[(i, b)]).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!((mean - exact[(a, b)]).abs() < 3.0 * se + 1e-12, "({a},{b})");
            }
        }
    }

    #[test]
    fn null_kernel_atom_has_zero_covariance() {
        // v^T I v = 1 kills t (1 - t)
        let dist = LatentDistribution::discrete(DMatrix::from_element(1, 1, 1.0), vec![1.0], Signature::new(1, 0))
            .unwrap();
        let s = ase_covariance(&[1.0], &dist, Regime::Dense).unwrap();
        assert_eq!(s[(0, 0)], 0.0);
    }

    #[test]
    fn two_block_ase_covariance_by_hand() {
        let dist = two_block_dist();
        let b = two_block_matrix();
        let LatentDistribution::Discrete { atoms, .. } = &dist else { unreachable!() };
        let v1 = atoms.row(0).transpose();
        let v2 = atoms.row(1).transpose();
        let delta = &v1 * v1.transpose() * 0.2 + &v2 * v2.transpose() * 0.8;
        let di = delta.try_inverse().unwrap();
        let i = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        for (x, row) in [(&v1, 0usize), (&v2, 1)] {
            let (b1, b2) = (b[(row, 0)], b[(row, 1)]);
            let mid = &v1 * v1.transpose() * (0.2 * b1 * (1.0 - b1)) + &v2 * v2.transpose() * (0.8 * b2 * (1.0 - b2));
            let expect = &i * &di * mid * &di * &i;
            let got = ase_covariance(x.as_slice(), &dist, Regime::Dense).unwrap();
            assert!((got - &expect).amax() < 1e-10 * expect.amax());
            let sparse = ase_covariance(x.as_slice(), &dist, Regime::Sparse).unwrap();
            let dense = ase_covariance(x.as_slice(), &dist, Regime::Dense).unwrap();
            // diagonal entries dominate: conjugated PSD terms with larger weights
            for k in 0..2 {
                assert!(sparse[(k, k)] >= dense[(k, k)]);
            }
            assert!(is_psd(&(sparse - dense)));
        }
    }

    #[test]
    fn dense_and_sparse_agree_for_tiny_kernels() {
        let f = kernel_factorize(&(two_block_matrix() * 1e-9), None).unwrap();
        let dist = LatentDistribution::discrete(f.vectors.clone(), vec![0.3, 0.7], f.signature).unwrap();
        let x: Vec<f64> = f.vectors.row(0).iter().copied().collect();
        let dense = ase_covariance(&x, &dist, Regime::Dense).unwrap();
        let sparse = ase_covariance(&x, &dist, Regime::Sparse).unwrap();
        assert!((dense - &sparse).amax() < 1e-7 * sparse.amax());
    }

    #[test]
    fn dirichlet_ase_covariance_matches_monte_carlo() {
        let dist = three_block_dist();
        let LatentDistribution::DirichletMixture { alpha, vertices, signature } = &dist else { unreachable!() };
        let x: Vec<f64> = (vertices.row(0) * 0.5 + vertices.row(2) * 0.5).iter().copied().collect();
        let exact = ase_covariance(&x, &dist, Regime::Dense).unwrap();
        assert!(is_psd(&exact));
        // independent oracle: plain sample average of the integrand
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let xi = draw_dirichlet(alpha, n, &mut rng).unwrap() * vertices;
        let mut middle = DMatrix::zeros(3, 3);
        for i in 0..n {
            let v = xi.row(i).transpose();
            let t = signature.inner(&x, v.as_slice()).unwrap();
            middle += &v * v.transpose() * (t * (1.0 - t));
        }
        middle /= n as f64;
        let delta = second_moment(&dist).unwrap().try_inverse().unwrap();
        let metric = signature.metric();
        let mc = &metric * &delta * middle * &delta * &metric;
        let rel = (mc - &exact).norm() / exact.norm();
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn lse_single_atom_by_hand() {
        for v in [0.3f64, 0.5, 0.9] {
            let dist = LatentDistribution::discrete(DMatrix::from_element(1, 1, v), vec![1.0], Signature::new(1, 0))
                .unwrap();
            let s = lse_covariance(&[v], &dist, Regime::Dense).unwrap();
            let expect = (1.0 - v * v) / (4.0 * v * v);
            assert!((s[(0, 0)] - expect).abs() < 1e-12);
            let sparse = lse_covariance(&[v], &dist, Regime::Sparse).unwrap();
            assert!((sparse[(0, 0)] - 1.0 / (4.0 * v * v)).abs() < 1e-12);
        }
    }

    #[test]
    fn lse_dense_sparse_differ_by_factor() {
        let dist = two_block_dist();
        let LatentDistribution::Discrete { atoms, .. } = &dist else { unreachable!() };
        let x: Vec<f64> = atoms.row(1).iter().copied().collect();
        let dense = lse_covariance(&x, &dist, Regime::Dense).unwrap();
        let sparse = lse_covariance(&x, &dist, Regime::Sparse).unwrap();
        assert!(is_psd(&dense) && is_psd(&sparse));
        assert!(is_psd(&(sparse - dense)));
    }

    #[test]
    fn lse_rejects_nonpositive_degree() {
        let atoms = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.5, 0.1]);
        let dist = LatentDistribution::discrete(atoms, vec![0.5, 0.5], Signature::new(1, 1)).unwrap();
        assert!(matches!(lse_covariance(&[0.1, 0.5], &dist, Regime::Dense), Err(Error::LseAssumption(_))));
    }

    #[test]
    fn dirichlet_lse_covariance_is_psd_and_seeded() {
        let dist = three_block_dist();
        let LatentDistribution::DirichletMixture { vertices, .. } = &dist else { unreachable!() };
        let x: Vec<f64> = vertices.row(0).iter().copied().collect();
        let mc = MonteCarlo { samples: 50_000, seed: 1 };
        let a = lse_covariance_with(&x, &dist, Regime::Dense, mc).unwrap();
        let b = lse_covariance_with(&x, &dist, Regime::Dense, mc).unwrap();
        assert_eq!(a, b);
        assert!(is_psd(&a));
    }

    #[test]
    fn coverage_examples() {
        let centers = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, -1.0, 2.0]);
        let covs = vec![DMatrix::identity(2, 2); 3];
        assert_eq!(empirical_ellipse_coverage(&centers, &centers, &covs, 0.95).unwrap(), 1.0);
        let shifted = centers.add_scalar(0.1);
        assert_eq!(empirical_ellipse_coverage(&shifted, &centers, &covs, 0.0).unwrap(), 0.0);
        let singular = vec![DMatrix::zeros(2, 2); 3];
        assert!(empirical_ellipse_coverage(&shifted, &centers, &singular, 0.95).is_err());
    }

    #[test]
    fn gaussian_coverage_is_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let l = cov.clone().cholesky().unwrap().l();
        let m = 20_000;
        let normal = rand_distr::StandardNormal;
        let pts = DMatrix::from_fn(m, 2, |_, _| rng.sample::<f64, _>(normal));
        let pts = pts * l.transpose();
        let centers = DMatrix::zeros(m, 2);
        let frac = empirical_ellipse_coverage(&pts, &centers, &vec![cov; m], 0.95).unwrap();
        assert!((frac - 0.95).abs() < 4.0 * (0.95f64 * 0.05 / m as f64).sqrt());
    }

    #[test]
    fn monte_carlo_error_brackets_seed_variation() {
        let dist = three_block_dist();
        let x = dist.mean();
        let x: Vec<f64> = x.iter().copied().collect();
        let mc = MonteCarlo { samples: 200_000, seed: 1 };
        let se = lse_covariance_standard_error(&x, &dist, Regime::Dense, mc, 10).unwrap();
        let a = lse_covariance_with(&x, &dist, Regime::Dense, mc).unwrap();
        let b = lse_covariance_with(&x, &dist, Regime::Dense, MonteCarlo { seed: 2, ..mc }).unwrap();
        assert!(se.iter().all(|v| *v > 0.0 && v.is_finite()));
        for (d, s) in (a - b).iter().zip(se.iter()) {
            assert!(d.abs() <= 6.0 * std::f64::consts::SQRT_2 * s, "{d} vs {s}");
        }
    }
}
