use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("isolated nodes have no normalised Laplacian row: {0:?}")]
    IsolatedNodes(Vec<usize>),

    #[error("zero matrix: no eigenvalue exceeds the rank tolerance {0:e}")]
    ZeroMatrix(f64),

    #[error("invalid model: kernel value {value} for pair ({i}, {j}) lies outside [0, 1]")]
    KernelOutOfRange { i: usize, j: usize, value: f64 },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("singular second moment matrix (condition number {0:e})")]
    SingularMoment(f64),

    #[error("model violates the Laplacian CLT assumption: {0}")]
    LseAssumption(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("point {point} lies outside the simplex (barycentric coordinate {value:e})")]
    ContainmentViolation { point: usize, value: f64 },

    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    #[error("empty prediction task: {0}")]
    EmptyTask(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSpectrum(_)
                | Error::ZeroMatrix(_)
                | Error::RankDeficient(_)
                | Error::DegenerateAlignment(_)
                | Error::SingularMoment(_)
                | Error::LseAssumption(_)
                | Error::DegenerateFit(_)
                | Error::DegenerateInput(_)
                | Error::ContainmentViolation { .. }
                | Error::UndefinedAuc(_)
                | Error::Numerical(_)
        )
    }
}
