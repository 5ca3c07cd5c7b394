//! Block-model parameters, their latent-vector factorisation, graph samplers
//! and explicit elements of the indefinite orthogonal group.
//!
//! Randomness: every sampler seeds `ChaCha8Rng::seed_from_u64(seed)`. Stream 0
//! draws per-node quantities in node order (a community label, or `K` Gamma
//! variates normalised into a Dirichlet vector). Row `i` of the adjacency
//! matrix uses stream `i + 1` and visits `j = i+1..n` in order, drawing one
//! uniform `u` per pair and adding the edge iff `u < P_ij`. Rows are therefore
//! independent and can be generated in parallel without changing the output.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, weighted::WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SymmetricGraph;
use crate::linalg::symmetric_eig;
use crate::signature::{indefinite_gram, Signature};

/// Latent vectors `v_1..v_K` (rows of `vectors`) with `V I_{p,q} V^T = B`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFactor {
    pub signature: Signature,
    pub vectors: DMatrix<f64>,
}

impl KernelFactor {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        indefinite_gram(&self.vectors, &self.vectors, self.signature).expect("factor width matches signature")
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.row(k).iter().copied().collect()
    }
}

fn factorize_symmetric(m: &DMatrix<f64>, rank_tolerance: Option<f64>) -> Result<KernelFactor> {
    let eig = symmetric_eig(m)?;
    let norm = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = rank_tolerance.unwrap_or(1e-10 * norm);
    if norm <= tol || norm == 0.0 {
        return Err(Error::ZeroMatrix(norm));
    }
    let mut pos: Vec<usize> = (0..eig.values.len()).filter(|&i| eig.values[i] > tol).collect();
    let mut neg: Vec<usize> = (0..eig.values.len()).filter(|&i| eig.values[i] < -tol).collect();
    pos.sort_by(|&a, &b| eig.values[b].total_cmp(&eig.values[a]).then(a.cmp(&b)));
    neg.sort_by(|&a, &b| eig.values[a].total_cmp(&eig.values[b]).then(a.cmp(&b)));
    let signature = Signature::new(pos.len(), neg.len());
    let idx: Vec<usize> = pos.into_iter().chain(neg).collect();
    let mut vectors = eig.vectors.select_columns(&idx);
    for (col, &i) in idx.iter().enumerate() {
        vectors.column_mut(col).scale_mut(eig.values[i].abs().sqrt());
    }
    Ok(KernelFactor { signature, vectors })
}

/// Factorises a block matrix into community latent vectors, the rows of
/// `U_B |S_B|^{1/2}`. Eigenvalues with `|λ| <= rank_tolerance` (default
/// `1e-10 ‖B‖`) are dropped.
pub fn kernel_factorize(b: &DMatrix<f64>, rank_tolerance: Option<f64>) -> Result<KernelFactor> {
    validate_block_matrix(b)?;
    factorize_symmetric(b, rank_tolerance)
}

/// Factor `M` of a symmetric bilinear-form matrix `J = M I_{p,q} M^T`.
/// Unlike [`kernel_factorize`] the entries of `J` are unrestricted.
pub fn affine_kernel_factorize(j: &DMatrix<f64>, rank_tolerance: Option<f64>) -> Result<KernelFactor> {
    factorize_symmetric(j, rank_tolerance)
}

fn validate_block_matrix(b: &DMatrix<f64>) -> Result<()> {
    if b.nrows() != b.ncols() || b.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "block matrix must be square and nonempty, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            let v = b[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("B[{i}][{j}] = {v} is outside [0, 1]")));
            }
            if (v - b[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("B is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// How nodes are attached to communities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mixture {
    /// One community per node, drawn with these probabilities.
    #[serde(rename = "weights")]
    Weights(Vec<f64>),
    /// Membership vectors drawn from a Dirichlet with this concentration.
    #[serde(rename = "alpha")]
    Dirichlet(Vec<f64>),
}

impl Mixture {
    pub fn len(&self) -> usize {
        match self {
            Mixture::Weights(w) => w.len(),
            Mixture::Dirichlet(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModelParams {
    pub b: DMatrix<f64>,
    pub mixture: Mixture,
    pub rho: f64,
    pub factor: KernelFactor,
}

impl BlockModelParams {
    pub fn new(b: DMatrix<f64>, mixture: Mixture, rho: f64) -> Result<Self> {
        validate_block_matrix(&b)?;
        let k = b.nrows();
        if mixture.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: mixture.len() });
        }
        match &mixture {
            Mixture::Weights(w) => {
                if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidInput("community weights must be positive".into()));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!("community weights sum to {s}, not 1")));
                }
            }
            Mixture::Dirichlet(a) => {
                if a.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidInput("Dirichlet concentrations must be positive".into()));
                }
            }
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidInput(format!("sparsity factor {rho} is outside (0, 1]")));
        }
        let factor = kernel_factorize(&b, None)?;
        factor.signature.validate_model()?;
        Ok(BlockModelParams { b, mixture, rho, factor })
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn signature(&self) -> Signature {
        self.factor.signature
    }

    /// Community vectors scaled by `sqrt(rho)`.
    pub fn scaled_vectors(&self) -> DMatrix<f64> {
        &self.factor.vectors * self.rho.sqrt()
    }
}

/// Where each latent position came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Communities(Vec<usize>),
    Memberships(DMatrix<f64>),
    Given,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub x: DMatrix<f64>,
    pub provenance: Provenance,
    pub signature: Signature,
}

impl LatentSample {
    pub fn labels(&self) -> Option<&[usize]> {
        match &self.provenance {
            Provenance::Communities(z) => Some(z),
            _ => None,
        }
    }

    pub fn memberships(&self) -> Option<&DMatrix<f64>> {
        match &self.provenance {
            Provenance::Memberships(p) => Some(p),
            _ => None,
        }
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64 + 1);
    rng
}

/// Samples the upper triangle row by row; `prob(i, j)` must lie in `[0, 1]`.
fn sample_rows<F>(n: usize, seed: u64, prob: F) -> SymmetricGraph
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let upper: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, i);
            let mut row = Vec::new();
            for j in i + 1..n {
                let u: f64 = rng.random();
                if u < prob(i, j) {
                    row.push(j);
                }
            }
            row
        })
        .collect();
    SymmetricGraph::from_upper_rows(n, upper)
}

fn check_node_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 nodes, got {n}")));
    }
    Ok(())
}

/// Stochastic block model: `P_ij = rho * B[z_i][z_j]`.
pub fn sample_sbm(params: &BlockModelParams, n: usize, seed: u64) -> Result<(SymmetricGraph, LatentSample)> {
    check_node_count(n)?;
    let Mixture::Weights(w) = &params.mixture else {
        return Err(Error::InvalidInput("block model sampling needs community weights".into()));
    };
    let dist = WeightedIndex::new(w).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<usize> = (0..n).map(|_| dist.sample(&mut rng)).collect();

    let v = params.scaled_vectors();
    let x = DMatrix::from_fn(n, v.ncols(), |i, j| v[(z[i], j)]);
    let scaled_b = &params.b * params.rho;
    let graph = sample_rows(n, seed, |i, j| scaled_b[(z[i], z[j])]);
    let latent = LatentSample { x, provenance: Provenance::Communities(z), signature: params.signature() };
    Ok((graph, latent))
}

/// Draws `n` Dirichlet(`alpha`) vectors from the node stream of `seed`.
pub fn draw_dirichlet(alpha: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let gammas = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::InvalidInput(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let k = alpha.len();
    let mut pi = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut total = 0.0;
        for (c, g) in gammas.iter().enumerate() {
            let v: f64 = g.sample(rng);
            pi[(i, c)] = v;
            total += v;
        }
        if !(total > 0.0) {
            return Err(Error::Numerical(format!("Gamma draws for node {i} sum to zero")));
        }
        pi.row_mut(i).unscale_mut(total);
    }
    Ok(pi)
}

/// Mixed-membership block model: `P_ij = rho * pi_i^T B pi_j`.
pub fn sample_mmsbm(params: &BlockModelParams, n: usize, seed: u64) -> Result<(SymmetricGraph, LatentSample)> {
    check_node_count(n)?;
    let Mixture::Dirichlet(alpha) = &params.mixture else {
        return Err(Error::InvalidInput("mixed-membership sampling needs a Dirichlet concentration".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = draw_dirichlet(alpha, n, &mut rng)?;
    let x = &pi * params.scaled_vectors();
    let right = &pi * (&params.b * params.rho);
    let k = params.k();
    let graph = sample_rows(n, seed, |i, j| {
        let mut p = 0.0;
        for c in 0..k {
            p += pi[(i, c)] * right[(j, c)];
        }
        p
    });
    let latent = LatentSample { x, provenance: Provenance::Memberships(pi), signature: params.signature() };
    Ok((graph, latent))
}

/// Samples `A_ij ~ Bernoulli(X_i^T I_{p,q} X_j)` for arbitrary latent positions.
/// Every kernel value must already lie in `[0, 1]`.
pub fn sample_grdpg(x: &DMatrix<f64>, sig: Signature, seed: u64) -> Result<SymmetricGraph> {
    if x.ncols() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: x.ncols() });
    }
    let n = x.nrows();
    let mut signed = x.clone();
    sig.apply_right(&mut signed);
    let kernel = |i: usize, j: usize| signed.row(i).dot(&x.row(j));
    let offending = (0..n).into_par_iter().find_first(|&i| {
        (i + 1..n).any(|j| {
            let v = kernel(i, j);
            !(0.0..=1.0).contains(&v)
        })
    });
    if let Some(i) = offending {
        let j = (i + 1..n).find(|&j| !(0.0..=1.0).contains(&kernel(i, j))).expect("row has a violation");
        return Err(Error::KernelOutOfRange { i, j, value: kernel(i, j) });
    }
    Ok(sample_rows(n, seed, kernel))
}

/// `P = X I_{p,q} X^T`.
pub fn edge_probability_matrix(x: &DMatrix<f64>, sig: Signature) -> Result<DMatrix<f64>> {
    indefinite_gram(x, x, sig)
}

/// Rotation by `t` in coordinates `i`, `j` of the same sign block.
pub fn givens_rotation(sig: Signature, i: usize, j: usize, t: f64) -> Result<DMatrix<f64>> {
    let d = sig.d();
    if i >= d || j >= d || i == j || sig.sign(i) != sig.sign(j) {
        return Err(Error::InvalidInput(format!(
            "coordinates ({i}, {j}) do not share a sign block of {sig}"
        )));
    }
    let mut m = DMatrix::identity(d, d);
    let (s, c) = t.sin_cos();
    m[(i, i)] = c;
    m[(j, j)] = c;
    m[(i, j)] = -s;
    m[(j, i)] = s;
    Ok(m)
}

/// Hyperbolic rotation (boost) by `theta` mixing a positive coordinate `i`
/// with a negative coordinate `j`.
pub fn hyperbolic_rotation(sig: Signature, i: usize, j: usize, theta: f64) -> Result<DMatrix<f64>> {
    let d = sig.d();
    if i >= d || j >= d || sig.sign(i) == sig.sign(j) {
        return Err(Error::InvalidInput(format!(
            "coordinates ({i}, {j}) must straddle the sign blocks of {sig}"
        )));
    }
    let mut m = DMatrix::identity(d, d);
    let (ch, sh) = (theta.cosh(), theta.sinh());
    m[(i, i)] = ch;
    m[(j, j)] = ch;
    m[(i, j)] = sh;
    m[(j, i)] = sh;
    Ok(m)
}

/// Rotation of the two negative coordinates for signature (1, 2).
pub fn opq_rotation(t: f64) -> DMatrix<f64> {
    givens_rotation(Signature::new(1, 2), 1, 2, t).expect("valid block")
}

/// Boost between the positive and first negative coordinate for signature (1, 2).
pub fn opq_hyperbolic(theta: f64) -> DMatrix<f64> {
    hyperbolic_rotation(Signature::new(1, 2), 0, 1, theta).expect("valid block")
}

/// A reproducible pseudo-random element of O(p, q) built from alternating
/// rotations and boosts with angles in `[-max_angle, max_angle]`.
pub fn random_opq(sig: Signature, max_angle: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let d = sig.d();
    let mut m = DMatrix::identity(d, d);
    for _ in 0..2 {
        for i in 0..d {
            for j in i + 1..d {
                let t = (rng.random::<f64>() * 2.0 - 1.0) * max_angle;
                let g = if sig.sign(i) == sig.sign(j) {
                    givens_rotation(sig, i, j, t)
                } else {
                    hyperbolic_rotation(sig, i, j, t)
                };
                m = g.expect("indices in range") * m;
            }
        }
    }
    m
}

/// JSON model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub mixture: Mixture,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub n: usize,
    pub seed: u64,
}

fn default_rho() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn params(&self) -> Result<BlockModelParams> {
        if self.b.len() != self.k || self.b.iter().any(|r| r.len() != self.k) {
            return Err(Error::InvalidInput(format!("B must be {0}x{0} to match K", self.k)));
        }
        let b = DMatrix::from_fn(self.k, self.k, |i, j| self.b[i][j]);
        BlockModelParams::new(b, self.mixture.clone(), self.rho)
    }

    /// Draws the graph and latent positions this configuration describes.
    pub fn sample(&self) -> Result<(SymmetricGraph, LatentSample)> {
        let params = self.params()?;
        match params.mixture {
            Mixture::Weights(_) => sample_sbm(&params, self.n, self.seed),
            Mixture::Dirichlet(_) => sample_mmsbm(&params, self.n, self.seed),
        }
    }
}

/// The two-community disassortative block matrix used throughout the examples.
pub fn two_block_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.02, 0.03, 0.03, 0.01])
}

/// The three-community mixed-membership block matrix used in the examples.
pub fn three_block_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.6, 0.9, 0.9, 0.9, 0.6, 0.9, 0.9, 0.9, 0.3])
}

/// Two-community SBM with weights (0.2, 0.8).
pub fn two_block_model() -> BlockModelParams {
    BlockModelParams::new(two_block_matrix(), Mixture::Weights(vec![0.2, 0.8]), 1.0).expect("valid model")
}

/// Three-community MMSBM with Dirichlet(1, 0.5, 0.5) memberships.
pub fn three_block_mixed_model() -> BlockModelParams {
    BlockModelParams::new(three_block_matrix(), Mixture::Dirichlet(vec![1.0, 0.5, 0.5]), 1.0)
        .expect("valid model")
}
