//! Adjacency and Laplacian spectral embeddings.
//!
//! Both keep `d` eigenpairs chosen by [`Selection`] and return the rows of
//! `U |S|^{1/2}`. Small graphs go through the dense solver, larger ones
//! through Lanczos on the sparse operator; both paths share the ordering and
//! sign conventions of [`crate::linalg`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SymmetricGraph;
use crate::lanczos::{partial_eig, SymmetricOperator};
use crate::linalg::{symmetric_eig, SelectedPairs, Selection};
use crate::signature::Signature;

/// Graphs up to this size are embedded with the dense eigensolver.
pub const DENSE_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Adjacency,
    Laplacian,
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacency" => Ok(EmbeddingKind::Adjacency),
            "laplacian" => Ok(EmbeddingKind::Laplacian),
            other => Err(Error::InvalidInput(format!("unknown embedding kind `{other}`"))),
        }
    }
}

/// Node vectors with the signature and eigenvalues they were built from.
/// Column `j` of `points` belongs to `eigenvalues[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub points: DMatrix<f64>,
    pub signature: Signature,
    pub eigenvalues: Vec<f64>,
    pub kind: EmbeddingKind,
}

impl Embedding {
    pub fn from_pairs(pairs: SelectedPairs, kind: EmbeddingKind) -> Self {
        let mut points = pairs.vectors;
        for (j, lam) in pairs.values.iter().enumerate() {
            let s = lam.abs().sqrt();
            points.column_mut(j).scale_mut(s);
        }
        Embedding { points, signature: pairs.signature, eigenvalues: pairs.values, kind }
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    /// `X I_{p,q} X^T`, the rank-`d` reconstruction of the embedded matrix.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        crate::signature::indefinite_gram(&self.points, &self.points, self.signature)
            .expect("embedding columns match signature")
    }
}

/// `D^{-1/2} A D^{-1/2}` as a sparse operator.
pub struct LaplacianOperator<'a> {
    graph: &'a SymmetricGraph,
    inv_sqrt_degree: Vec<f64>,
}

impl<'a> LaplacianOperator<'a> {
    pub fn new(graph: &'a SymmetricGraph) -> Result<Self> {
        let isolated = graph.isolated_nodes();
        if !isolated.is_empty() {
            return Err(Error::IsolatedNodes(isolated));
        }
        let inv_sqrt_degree = graph.degrees().iter().map(|&k| 1.0 / (k as f64).sqrt()).collect();
        Ok(LaplacianOperator { graph, inv_sqrt_degree })
    }
}

impl SymmetricOperator for LaplacianOperator<'_> {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let scaled: Vec<f64> = x.iter().zip(&self.inv_sqrt_degree).map(|(a, b)| a * b).collect();
        self.graph.apply(&scaled, y);
        for (yi, s) in y.iter_mut().zip(&self.inv_sqrt_degree) {
            *yi *= s;
        }
    }
}

/// Dense normalised Laplacian `L_ij = A_ij / sqrt(deg_i deg_j)`.
pub fn normalized_laplacian(graph: &SymmetricGraph) -> Result<DMatrix<f64>> {
    let op = LaplacianOperator::new(graph)?;
    let mut l = DMatrix::zeros(graph.n(), graph.n());
    for (i, j) in graph.edges() {
        let v = op.inv_sqrt_degree[i] * op.inv_sqrt_degree[j];
        l[(i, j)] = v;
        l[(j, i)] = v;
    }
    Ok(l)
}

/// Eigenpairs of a symmetric operator, dense below [`DENSE_LIMIT`].
pub fn operator_eigenpairs(
    op: &dyn SymmetricOperator,
    dense: impl FnOnce() -> Result<DMatrix<f64>>,
    sel: Selection,
) -> Result<SelectedPairs> {
    let n = op.dim();
    if sel.requested() > n {
        return Err(Error::InvalidInput(format!(
            "embedding dimension {} exceeds node count {n}",
            sel.requested()
        )));
    }
    if n <= DENSE_LIMIT {
        symmetric_eig(&dense()?)?.select(sel)
    } else {
        partial_eig(op, sel)
    }
}

fn check_dimension(graph: &SymmetricGraph, d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidInput("embedding dimension must be at least 1".into()));
    }
    if d > graph.n() {
        return Err(Error::InvalidInput(format!(
            "embedding dimension {d} exceeds node count {}",
            graph.n()
        )));
    }
    if graph.edge_count() == 0 {
        return Err(Error::DegenerateSpectrum("graph has no edges".into()));
    }
    Ok(())
}

/// Spectral embedding of `graph` with an explicit eigenpair selection rule.
pub fn spectral_embed(graph: &SymmetricGraph, kind: EmbeddingKind, sel: Selection) -> Result<Embedding> {
    check_dimension(graph, sel.requested())?;
    let pairs = match kind {
        EmbeddingKind::Adjacency => operator_eigenpairs(graph, || Ok(graph.to_dense()), sel)?,
        EmbeddingKind::Laplacian => {
            let op = LaplacianOperator::new(graph)?;
            operator_eigenpairs(&op, || normalized_laplacian(graph), sel)?
        }
    };
    Ok(Embedding::from_pairs(pairs, kind))
}

/// Adjacency spectral embedding into `R^d` (largest-magnitude eigenvalues).
pub fn adjacency_spectral_embed(graph: &SymmetricGraph, d: usize) -> Result<Embedding> {
    spectral_embed(graph, EmbeddingKind::Adjacency, Selection::Magnitude(d))
}

/// Laplacian spectral embedding into `R^d` (largest-magnitude eigenvalues of `L`).
pub fn laplacian_spectral_embed(graph: &SymmetricGraph, d: usize) -> Result<Embedding> {
    spectral_embed(graph, EmbeddingKind::Laplacian, Selection::Magnitude(d))
}

/// Positive-definite baseline: the `d` algebraically largest adjacency
/// eigenvalues, keeping only the positive ones.
pub fn rdpg_spectral_embed(graph: &SymmetricGraph, d: usize) -> Result<Embedding> {
    spectral_embed(graph, EmbeddingKind::Adjacency, Selection::PositiveAlgebraic(d))
}

/// Embeds a dense symmetric matrix (for example an edge probability matrix).
pub fn embed_matrix(m: &DMatrix<f64>, sel: Selection) -> Result<Embedding> {
    let pairs = symmetric_eig(m)?.select(sel)?;
    Ok(Embedding::from_pairs(pairs, EmbeddingKind::Adjacency))
}
