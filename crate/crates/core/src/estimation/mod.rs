//! Block-model estimation from spectral embeddings: Gaussian mixture
//! clustering, a k-means baseline, mixed-membership simplex fitting and
//! recovery of the block matrix.

pub mod gmm;
pub mod kmeans;
pub mod metrics;
pub mod polytope;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signature::{indefinite_gram, Signature};

pub use gmm::{fit_gmm, GmmFit, GmmOptions};
pub use kmeans::{kmeans, kmeans_baseline, KMeansFit};
pub use metrics::{adjusted_rand_index, hausdorff_distance, match_labels, match_rows, misclassification_rate};
pub use polytope::{
    barycentric_coordinates, fit_polytope, lift_vertices, min_volume_enclosing_polytope, pca_project,
    simplex_volume, MvesOptions, PolytopeFit, Projection,
};

pub const DEFAULT_RESTARTS: usize = 10;

/// Independent stream per restart of a seeded fit.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate {
    pub b: DMatrix<f64>,
    /// True when some entry falls outside `[0, 1]`.
    pub out_of_range: bool,
}

/// `B_kl = <u_k, u_l>` in the indefinite inner product; rows of `vectors`
/// are the `u_k`. Entries are not clamped.
pub fn recover_block_matrix(vectors: &DMatrix<f64>, sig: Signature) -> Result<BlockEstimate> {
    if vectors.ncols() != sig.d() {
        return Err(Error::DimensionMismatch { expected: sig.d(), got: vectors.ncols() });
    }
    let g = indefinite_gram(vectors, vectors, sig)?;
    let b = (&g + g.transpose()) * 0.5;
    let out_of_range = b.iter().any(|&v| !(0.0..=1.0).contains(&v));
    if out_of_range {
        log::warn!("recovered block matrix has entries outside [0, 1]");
    }
    Ok(BlockEstimate { b, out_of_range })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{kernel_factorize, opq_hyperbolic, three_block_matrix, two_block_matrix};

    #[test]
    fn round_trip_from_factor() {
        for b in [two_block_matrix(), three_block_matrix()] {
            let f = kernel_factorize(&b, None).unwrap();
            let est = recover_block_matrix(&f.vectors, f.signature).unwrap();
            assert!((est.b - &b).amax() < 1e-10);
            assert!(!est.out_of_range);
        }
    }

    #[test]
    fn invariant_under_indefinite_orthogonal_maps() {
        let b = three_block_matrix();
        let f = kernel_factorize(&b, None).unwrap();
        let m = opq_hyperbolic(1.3);
        let moved = &f.vectors * m.transpose();
        let est = recover_block_matrix(&moved, f.signature).unwrap();
        assert!((est.b - b).amax() < 1e-10);
    }

    #[test]
    fn flags_out_of_range_and_mismatch() {
        let v = DMatrix::from_row_slice(2, 1, &[2.0, 0.1]);
        assert!(recover_block_matrix(&v, Signature::new(1, 0)).unwrap().out_of_range);
        assert!(matches!(
            recover_block_matrix(&v, Signature::new(1, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
