//! Simulation, spectral embedding and estimation for generalised random dot
//! product graphs.

pub mod alignment;
pub mod cli;
pub mod clt;
pub mod embed;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod io;
pub mod lanczos;
pub mod linalg;
pub mod linkpred;
pub mod model;
pub mod pipeline;
pub mod signature;

pub use error::{Error, Result};
pub use graph::SymmetricGraph;
pub use signature::Signature;
