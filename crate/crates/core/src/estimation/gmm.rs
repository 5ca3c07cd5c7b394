//! Gaussian mixture EM with full per-component covariances.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

use super::kmeans::{assign, kmeanspp_seeds};
use super::restart_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Diagonal loading; `None` means `1e-8 * trace(sample covariance) / d`.
    pub reg: Option<f64>,
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions { seed: 0, restarts: super::DEFAULT_RESTARTS, max_iter: 1000, reg: None, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    /// One mean per row.
    pub means: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    pub responsibilities: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// Log-likelihood before each M-step, ending at the returned parameters.
    pub log_likelihood: Vec<f64>,
}

impl GmmFit {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().expect("at least one E-step")
    }
}

struct Params {
    weights: Vec<f64>,
    means: DMatrix<f64>,
    covariances: Vec<DMatrix<f64>>,
}

fn sample_covariance_trace(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows() as f64;
    let mean = points.row_mean();
    (0..points.ncols())
        .map(|c| points.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n)
        .sum()
}

/// Weighted M-step from responsibilities.
fn m_step(points: &DMatrix<f64>, resp: &DMatrix<f64>, reg: f64) -> Option<Params> {
    let (n, d) = points.shape();
    let k = resp.ncols();
    let mut weights = Vec::with_capacity(k);
    let mut means = DMatrix::zeros(k, d);
    let mut covariances = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.column(j).sum();
        if !(nk > 1e-10 * n as f64) {
            return None;
        }
        weights.push(nk / n as f64);
        let mean = resp.column(j).transpose() * points / nk;
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let r = resp[(i, j)];
            if r == 0.0 {
                continue;
            }
            let diff = points.row(i) - &mean;
            cov += diff.transpose() * &diff * r;
        }
        cov /= nk;
        cov = (&cov + cov.transpose()) * 0.5;
        for c in 0..d {
            cov[(c, c)] += reg;
        }
        means.set_row(j, &mean);
        covariances.push(cov);
    }
    Some(Params { weights, means, covariances })
}

/// Responsibilities and total log-likelihood.
fn e_step(points: &DMatrix<f64>, params: &Params) -> Option<(DMatrix<f64>, f64)> {
    let (n, d) = points.shape();
    let k = params.weights.len();
    let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut factors: Vec<(Cholesky<f64, Dyn>, f64)> = Vec::with_capacity(k);
    for cov in &params.covariances {
        let chol = cov.clone().cholesky()?;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        factors.push((chol, log_det));
    }
    let mut resp = DMatrix::zeros(n, k);
    let mut total = 0.0;
    let mut logp = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            let diff = DVector::from_iterator(d, (0..d).map(|c| points[(i, c)] - params.means[(j, c)]));
            let z = factors[j].0.l().solve_lower_triangular(&diff)?;
            logp[j] = params.weights[j].ln() + log_norm - 0.5 * factors[j].1 - 0.5 * z.norm_squared();
        }
        let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logp.iter().map(|l| (l - m).exp()).sum();
        let lse = m + s.ln();
        total += lse;
        for j in 0..k {
            resp[(i, j)] = (logp[j] - lse).exp();
        }
    }
    total.is_finite().then_some((resp, total))
}

fn hard_responsibilities(labels: &[usize], k: usize) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        r[(i, l)] = 1.0;
    }
    r
}

fn argmax_labels(resp: &DMatrix<f64>) -> Vec<usize> {
    resp.row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn run_em(points: &DMatrix<f64>, init: DMatrix<f64>, reg: f64, opts: &GmmOptions) -> Option<GmmFit> {
    let mut params = m_step(points, &init, reg)?;
    let mut trace = Vec::new();
    let mut resp;
    loop {
        let (r, ll) = e_step(points, &params)?;
        resp = r;
        let done = match trace.last() {
            Some(&prev) => {
                let prev: f64 = prev;
                (ll - prev).abs() < opts.tol * prev.abs().max(f64::MIN_POSITIVE)
            }
            None => false,
        };
        trace.push(ll);
        if done || trace.len() > opts.max_iter {
            break;
        }
        params = m_step(points, &resp, reg)?;
    }
    let labels = argmax_labels(&resp);
    Some(GmmFit {
        weights: params.weights,
        means: params.means,
        covariances: params.covariances,
        responsibilities: resp,
        labels,
        log_likelihood: trace,
    })
}

/// EM fit of a `k`-component full-covariance Gaussian mixture, best of
/// `opts.restarts` k-means++ initialisations by final log-likelihood.
pub fn fit_gmm(points: &DMatrix<f64>, k: usize, opts: &GmmOptions) -> Result<GmmFit> {
    let (n, d) = points.shape();
    if k == 0 || d == 0 {
        return Err(Error::InvalidInput("need K >= 1 and at least one dimension".into()));
    }
    if n < k * (d + 1) {
        return Err(Error::InvalidInput(format!("{n} points are too few for {k} components in dimension {d}")));
    }
    let reg = match opts.reg {
        Some(r) => r,
        None => {
            let t = sample_covariance_trace(points);
            if !(t > 0.0) {
                return Err(Error::DegenerateFit("all points coincide".into()));
            }
            1e-8 * t / d as f64
        }
    };
    let mut best: Option<GmmFit> = None;
    for r in 0..opts.restarts.max(1) {
        let mut rng = restart_rng(opts.seed, r);
        let seeds = kmeanspp_seeds(points, k, &mut rng);
        let (labels, _) = assign(points, &seeds);
        let Some(fit) = run_em(points, hard_responsibilities(&labels, k), reg, opts) else {
            log::debug!("GMM restart {r} collapsed");
            continue;
        };
        if best.as_ref().is_none_or(|b| fit.final_log_likelihood() > b.final_log_likelihood()) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::DegenerateFit(format!("all {} restarts collapsed", opts.restarts.max(1))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn separated_point_masses() {
        let mut rows = vec![];
        for i in 0..30 {
            rows.extend_from_slice(if i % 3 == 0 { &[0.0, 0.0] } else { &[10.0, 10.0] });
        }
        let p = DMatrix::from_row_slice(30, 2, &rows);
        let fit = fit_gmm(&p, 2, &GmmOptions::default()).unwrap();
        let a = fit.labels[0];
        let b = fit.labels[1];
        assert_ne!(a, b);
        assert_eq!(fit.means.row(a).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(fit.means.row(b).iter().copied().collect::<Vec<_>>(), vec![10.0, 10.0]);
        for i in 0..30 {
            let want = if i % 3 == 0 { a } else { b };
            assert_eq!(fit.responsibilities[(i, want)], 1.0);
        }
    }

    #[test]
    fn single_component_is_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DMatrix::from_fn(200, 2, |_, c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (c + 1) as f64
        });
        let opts = GmmOptions { reg: Some(0.0), ..Default::default() };
        let fit = fit_gmm(&p, 1, &opts).unwrap();
        let mean = p.row_mean();
        assert!((fit.means.row(0) - &mean).amax() < 1e-12);
        let centered = DMatrix::from_fn(200, 2, |i, c| p[(i, c)] - mean[c]);
        let cov = centered.transpose() * &centered / 200.0;
        assert!((&fit.covariances[0] - cov).amax() < 1e-12);
        assert_eq!(fit.weights, vec![1.0]);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = DMatrix::from_fn(600, 2, |i, c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = if i % 3 == 0 { 2.0 } else { -1.0 };
            z * (0.5 + 0.5 * c as f64) + shift * (1.0 - c as f64)
        });
        let fit = fit_gmm(&p, 3, &GmmOptions { seed: 4, ..Default::default() }).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for c in &fit.covariances {
            assert!(c.clone().cholesky().is_some());
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let p = DMatrix::zeros(5, 2);
        assert!(matches!(fit_gmm(&p, 2, &GmmOptions::default()), Err(Error::InvalidInput(_))));
        let same = DMatrix::from_element(10, 2, 1.0);
        assert!(matches!(fit_gmm(&same, 2, &GmmOptions::default()), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DMatrix::from_fn(100, 2, |_, _| StandardNormal.sample(&mut rng));
        let opts = GmmOptions { seed: 9, ..Default::default() };
        let a = fit_gmm(&p, 2, &opts).unwrap();
        let b = fit_gmm(&p, 2, &opts).unwrap();
        assert_eq!(a.means, b.means);
        assert_eq!(a.labels, b.labels);
    }
}
