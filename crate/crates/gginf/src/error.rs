use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge at t = {t}")]
    QuadratureNonconvergence { t: f64 },

    #[error("path length cap of {cap} arrivals exceeded before horizon {horizon}")]
    PathCapExceeded { cap: usize, horizon: f64 },

    #[error("evaluation time {t} beyond path horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("evaluation times must be sorted ascending")]
    UnsortedTimes,

    #[error("normalizer is not strictly positive at t = {t}")]
    NonpositiveNormalizer { t: f64 },

    #[error("covariance factorization failed after jitter escalation")]
    FactorizationFailed,

    #[error("sheet discretization too coarse: variance off by {rel_err:.3e} at u = {u}")]
    DiscretizationTooCoarse { u: f64, rel_err: f64 },

    #[error("the sheet sampler degenerates at beta = 0; use the cholesky route instead")]
    SheetBetaZero,

    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("degenerate sample (zero variance) at u = {u}")]
    DegenerateSample { u: f64 },

    #[error("grid point {0} not present in sample grid")]
    GridPointNotFound(f64),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
