use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("model invariant violated: {0}")]
    ModelInvariant(String),

    #[error("input matrix is rank deficient (rank {rank}, expected {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("parameter {value} outside domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("boundary unreachable: {0}")]
    BoundaryUnreachable(String),

    #[error("VHC/solution inconsistent: residual {residual:e} at t = {t}")]
    Inconsistent { t: f64, residual: f64 },

    #[error("state outside the chart tube: {0}")]
    OutsideTube(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("periodic Riccati did not converge after {sweeps} periods (last mismatch {mismatch:e})")]
    RiccatiNoConvergence { sweeps: usize, mismatch: f64 },

    #[error("linearized model is not controllable over one period (min Gramian eigenvalue {min_eig:e})")]
    NotControllable { min_eig: f64 },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in `error.json`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "non_finite",
            Error::ModelInvariant(_) => "model_invariant",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::Precondition(_) => "precondition",
            Error::BoundaryUnreachable(_) => "boundary_unreachable",
            Error::Inconsistent { .. } => "inconsistent",
            Error::OutsideTube(_) => "outside_tube",
            Error::Integration(_) => "integration",
            Error::RiccatiNoConvergence { .. } => "riccati_no_convergence",
            Error::NotControllable { .. } => "not_controllable",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
