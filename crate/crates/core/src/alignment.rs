//! Indefinite orthogonal alignment between a spectral embedding and known
//! latent positions.
//!
//! With `X = U |S|^{1/2} Q_X` for the eigenpairs `(U, S)` of `P = X I X^T`,
//! and `W` the block-wise Procrustes rotation taking `U` onto the estimated
//! eigenvectors `Û`, the matrix `Q_n = Q_X^T W` maps each embedded row onto
//! its latent position: `Q_n X̂_i ≈ X_i`.

use nalgebra::DMatrix;

use crate::embed::{spectral_embed, Embedding, EmbeddingKind};
use crate::error::{Error, Result};
use crate::graph::SymmetricGraph;
use crate::linalg::{low_rank_indefinite_eig, polar_factor, spectral_norm, SelectedPairs, Selection};
use crate::signature::{group_residual, Signature};

/// Thresholds on `‖Q_n I Q_n^T − I‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentTolerance {
    pub warn: f64,
    pub error: f64,
}

impl Default for AlignmentTolerance {
    fn default() -> Self {
        AlignmentTolerance { warn: 1e-6, error: 1e-2 }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub q_n: DMatrix<f64>,
    pub w_star: DMatrix<f64>,
    pub q_x: DMatrix<f64>,
    pub residual: f64,
    pub spectral_norm: f64,
    pub signature: Signature,
    /// The embedding that `q_n` aligns.
    pub embedding: Embedding,
    /// Rows the aligned embedding estimates: `X` for adjacency,
    /// `X_i / sqrt(sum_j X_i^T I X_j)` for the Laplacian.
    pub target: DMatrix<f64>,
}

impl AlignmentResult {
    /// Rows `Q_n X̂_i`.
    pub fn aligned_points(&self) -> DMatrix<f64> {
        align_rows(&self.embedding.points, &self.q_n)
    }

    /// `max_i ‖Q_n X̂_i − target_i‖`.
    pub fn two_to_infinity_error(&self) -> f64 {
        let diff = self.aligned_points() - &self.target;
        diff.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
    }
}

/// Applies `m` to every row: returns the rows `m x_i`.
pub fn align_rows(points: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    points * m.transpose()
}

/// `Q_X = |S|^{-1/2} U^T X`, checking that `X = U |S|^{1/2} Q_X`.
pub fn latent_to_spectral(x: &DMatrix<f64>, population: &SelectedPairs) -> Result<DMatrix<f64>> {
    let sig = population.signature;
    if x.ncols() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: x.ncols() });
    }
    if population.vectors.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: population.vectors.nrows() });
    }
    let scale = population.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if population.values.iter().any(|v| v.abs() <= 1e-10 * scale) || scale == 0.0 {
        return Err(Error::RankDeficient(format!("eigenvalues {:?}", population.values)));
    }
    let mut q_x = population.vectors.transpose() * x;
    for (j, lam) in population.values.iter().enumerate() {
        q_x.row_mut(j).unscale_mut(lam.abs().sqrt());
    }
    let mut rebuilt = population.vectors.clone();
    for (j, lam) in population.values.iter().enumerate() {
        rebuilt.column_mut(j).scale_mut(lam.abs().sqrt());
    }
    let misfit = (rebuilt * &q_x - x).norm();
    if misfit > 1e-8 * x.norm() {
        return Err(Error::RankDeficient(format!(
            "X is not spanned by the eigenvectors of X I X^T (misfit {misfit:e})"
        )));
    }
    Ok(q_x)
}

/// Upper bound `sqrt(‖X^T X‖ / min_i |S_ii|)` on `‖Q_X‖`.
pub fn latent_norm_bound(x: &DMatrix<f64>, population: &SelectedPairs) -> f64 {
    let gram = x.transpose() * x;
    let smin = population.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    (spectral_norm(&gram) / smin).sqrt()
}

/// Block-diagonal orthogonal `W` whose blocks are the polar factors of
/// `U_+^T Û_+` and `U_-^T Û_-`.
pub fn block_procrustes(u: &DMatrix<f64>, u_hat: &DMatrix<f64>, sig: Signature) -> Result<DMatrix<f64>> {
    let d = sig.d();
    for m in [u, u_hat] {
        if m.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.ncols() });
        }
    }
    if u.nrows() != u_hat.nrows() {
        return Err(Error::DimensionMismatch { expected: u.nrows(), got: u_hat.nrows() });
    }
    let mut w = DMatrix::zeros(d, d);
    for (start, len) in [(0, sig.p), (sig.p, sig.q)] {
        if len == 0 {
            continue;
        }
        let cross = u.columns(start, len).transpose() * u_hat.columns(start, len);
        let block = polar_factor(&cross)?;
        w.view_mut((start, start), (len, len)).copy_from(&block);
    }
    Ok(w)
}

/// Combines population and observed eigenpairs into `Q_n`.
pub fn alignment_from_pairs(
    target: &DMatrix<f64>,
    population: &SelectedPairs,
    observed: &SelectedPairs,
    tolerance: AlignmentTolerance,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64)> {
    let sig = population.signature;
    if observed.signature != sig {
        return Err(Error::DegenerateAlignment(format!(
            "observed signature {} differs from latent signature {sig}",
            observed.signature
        )));
    }
    let q_x = latent_to_spectral(target, population)?;
    let w_star = block_procrustes(&population.vectors, &observed.vectors, sig)?;
    let q_n = q_x.transpose() * &w_star;
    let residual = group_residual(&q_n, sig);
    if residual > tolerance.error {
        return Err(Error::DegenerateAlignment(format!(
            "Q_n is off the indefinite orthogonal group by {residual:e}"
        )));
    }
    if residual > tolerance.warn {
        log::warn!("Q_n group residual {residual:e} exceeds {:e}", tolerance.warn);
    }
    Ok((q_n, w_star, q_x, residual))
}

/// Population Laplacian latent rows `X_i / sqrt(X_i^T I sum_j X_j)`.
pub fn laplacian_latents(x: &DMatrix<f64>, sig: Signature) -> Result<DMatrix<f64>> {
    if x.ncols() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: x.ncols() });
    }
    let total = x.row_sum();
    let mut y = x.clone();
    for i in 0..x.nrows() {
        let mut deg = 0.0;
        for j in 0..sig.d() {
            deg += sig.sign(j) * x[(i, j)] * total[j];
        }
        if !(deg > 0.0) {
            return Err(Error::LseAssumption(format!("expected degree of node {i} is {deg}")));
        }
        y.row_mut(i).unscale_mut(deg.sqrt());
    }
    Ok(y)
}

/// Embeds `graph` with the signature of `x` and aligns it to the true
/// latent positions (adjacency) or their degree-normalised form (Laplacian).
pub fn estimate_qn_with(
    graph: &SymmetricGraph,
    x: &DMatrix<f64>,
    sig: Signature,
    kind: EmbeddingKind,
    tolerance: AlignmentTolerance,
) -> Result<AlignmentResult> {
    if x.nrows() != graph.n() {
        return Err(Error::DimensionMismatch { expected: graph.n(), got: x.nrows() });
    }
    let target = match kind {
        EmbeddingKind::Adjacency => x.clone(),
        EmbeddingKind::Laplacian => laplacian_latents(x, sig)?,
    };
    let population = low_rank_indefinite_eig(&target, sig)?;
    let embedding = spectral_embed(graph, kind, Selection::Signature(sig))?;
    let observed = SelectedPairs {
        values: embedding.eigenvalues.clone(),
        vectors: unscaled_vectors(&embedding),
        signature: embedding.signature,
    };
    let (q_n, w_star, q_x, residual) = alignment_from_pairs(&target, &population, &observed, tolerance)?;
    let spectral_norm = spectral_norm(&q_n);
    Ok(AlignmentResult { q_n, w_star, q_x, residual, spectral_norm, signature: sig, embedding, target })
}

/// Adjacency alignment with default tolerances.
pub fn estimate_qn(graph: &SymmetricGraph, x: &DMatrix<f64>, sig: Signature) -> Result<AlignmentResult> {
    estimate_qn_with(graph, x, sig, EmbeddingKind::Adjacency, AlignmentTolerance::default())
}

/// Laplacian alignment with default tolerances.
pub fn estimate_qn_laplacian(graph: &SymmetricGraph, x: &DMatrix<f64>, sig: Signature) -> Result<AlignmentResult> {
    estimate_qn_with(graph, x, sig, EmbeddingKind::Laplacian, AlignmentTolerance::default())
}

fn unscaled_vectors(e: &Embedding) -> DMatrix<f64> {
    let mut u = e.points.clone();
    for (j, lam) in e.eigenvalues.iter().enumerate() {
        u.column_mut(j).unscale_mut(lam.abs().sqrt());
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_matrix;
    use crate::model::{edge_probability_matrix, opq_hyperbolic, sample_sbm, BlockModelParams, Mixture};

    fn dense_two_block() -> BlockModelParams {
        let b = crate::model::two_block_matrix() * 10.0;
        BlockModelParams::new(b, Mixture::Weights(vec![0.2, 0.8]), 1.0).unwrap()
    }

    fn mixed_latents() -> (DMatrix<f64>, Signature) {
        let params = crate::model::three_block_mixed_model();
        let (_, latent) = crate::model::sample_mmsbm(&params, 50, 3).unwrap();
        (latent.x, latent.signature)
    }

    #[test]
    fn spectral_latents_give_identity() {
        let (x, sig) = mixed_latents();
        let p = edge_probability_matrix(&x, sig).unwrap();
        let e = embed_matrix(&p, Selection::Signature(sig)).unwrap();
        let pop = low_rank_indefinite_eig(&e.points, sig).unwrap();
        let q_x = latent_to_spectral(&e.points, &pop).unwrap();
        assert!((q_x - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn transformed_latents_stay_in_group() {
        let (x, sig) = mixed_latents();
        let m = opq_hyperbolic(0.9);
        let moved = &x * m.transpose();
        let pop = low_rank_indefinite_eig(&moved, sig).unwrap();
        let q_x = latent_to_spectral(&moved, &pop).unwrap();
        assert!(group_residual(&q_x, sig) < 1e-10);
        assert!(spectral_norm(&q_x) <= latent_norm_bound(&moved, &pop) * (1.0 + 1e-12));
    }

    #[test]
    fn procrustes_exactness() {
        let (x, sig) = mixed_latents();
        let pop = low_rank_indefinite_eig(&x, sig).unwrap();
        let w = block_procrustes(&pop.vectors, &pop.vectors, sig).unwrap();
        assert!((w - DMatrix::identity(3, 3)).amax() < 1e-12);

        let r = crate::model::opq_rotation(0.4);
        let rotated = &pop.vectors * &r;
        let w = block_procrustes(&pop.vectors, &rotated, sig).unwrap();
        assert!((w - r).amax() < 1e-12);
    }

    #[test]
    fn noise_free_alignment_is_qx_transpose() {
        let (x, sig) = mixed_latents();
        let pop = low_rank_indefinite_eig(&x, sig).unwrap();
        let (q_n, w, q_x, residual) =
            alignment_from_pairs(&x, &pop, &pop, AlignmentTolerance::default()).unwrap();
        assert!((w - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!((&q_n - q_x.transpose()).amax() < 1e-12);
        assert!(residual < 1e-10);
    }

    #[test]
    fn sbm_alignment_properties() {
        let params = dense_two_block();
        let (g, latent) = sample_sbm(&params, 400, 21).unwrap();
        let r = estimate_qn(&g, &latent.x, latent.signature).unwrap();
        assert!(r.residual < 1e-6);
        assert!((r.spectral_norm - spectral_norm(&r.q_x)).abs() < 1e-10);
        let wtw = r.w_star.transpose() * &r.w_star;
        assert!((wtw - DMatrix::identity(2, 2)).amax() < 1e-10);
        assert_eq!(r.w_star[(0, 1)], 0.0);
        assert!(r.two_to_infinity_error() < 0.4);
        assert!((r.q_n[(0, 0)].abs() - 1.05).abs() < 0.05);
    }

    #[test]
    fn laplacian_alignment_runs() {
        let params = dense_two_block();
        let (g, latent) = sample_sbm(&params, 400, 5).unwrap();
        let r = estimate_qn_laplacian(&g, &latent.x, latent.signature).unwrap();
        assert!(r.residual < 1e-6);
        let aligned = r.aligned_points();
        let mean_err = (0..400).map(|i| (aligned.row(i) - r.target.row(i)).norm()).sum::<f64>() / 400.0;
        let scale = r.target.row(0).norm();
        assert!(mean_err < 0.5 * scale, "{mean_err} vs {scale}");
    }

    #[test]
    fn rank_deficient_latents_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, 0.5, 1.0, 0.5]);
        assert!(matches!(
            low_rank_indefinite_eig(&x, Signature::new(1, 1)),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn laplacian_latents_need_positive_degrees() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.1, 0.5]);
        assert!(matches!(laplacian_latents(&x, Signature::new(1, 1)), Err(Error::LseAssumption(_))));
    }
}
