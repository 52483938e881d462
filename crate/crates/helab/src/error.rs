use thiserror::Error;

/// Errors surfaced by the numerical laboratory.
#[derive(Debug, Error)]
pub enum HelabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solvability error: {0}")]
    Solvability(String),

    #[error("state error: {0}")]
    State(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("higgs field validation failed: residual {residual:.3e} exceeds tol {tol:.3e}")]
    NotAHiggsBundle { residual: f64, tol: f64 },

    #[error("solver failed to converge at eps={eps}: residual {residual:.3e} after {iters} iterations")]
    NoConvergence {
        eps: f64,
        residual: f64,
        iters: usize,
        history: Vec<f64>,
    },

    #[error("ill-conditioned projection: threshold {threshold} lies inside an eigenvalue cluster (nearest eigenvalue {nearest})")]
    ThresholdInCluster { threshold: f64, nearest: f64 },

    #[error("unsupported wedge power: rank {rank}, p {p}")]
    UnsupportedWedge { rank: usize, p: usize },

    #[error("analysis refused: {0}")]
    AnalysisRefused(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, HelabError>;
