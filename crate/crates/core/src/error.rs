use thiserror::Error;

/// Errors raised by the simulation and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A secular-frequency radicand is not positive: the trap no longer confines the ion.
    #[error("trap is unconfined along {axis} (radicand {radicand:.6e} s^-2)")]
    UnconfinedTrap { axis: char, radicand: f64 },

    #[error("inconsistent secular frequencies: {0}")]
    InconsistentFrequencies(String),

    #[error("sideband order {order} is not reachable from phonon number {n}")]
    InvalidSideband { n: u32, order: i32 },

    #[error("joint phonon support has {terms} terms, above the limit of {limit}")]
    TruncationOverflow { terms: usize, limit: usize },

    #[error("fit did not converge after {iterations} iterations ({starts} starts)")]
    NonConvergence { iterations: usize, starts: usize },

    /// Two distinct |alpha| basins explain the data equally well.
    #[error("ambiguous fit: |alpha| = {first:.4} (chi2 {first_chi2:.3}) vs {second:.4} (chi2 {second_chi2:.3})")]
    AmbiguousFit {
        first: f64,
        first_chi2: f64,
        second: f64,
        second_chi2: f64,
    },

    #[error("Monte-Carlo aborted: {failed} of {replicas} replicas failed")]
    McAborted { failed: usize, replicas: usize },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; outputs of earlier stages are kept.
    #[error("stage '{stage}' failed: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::UnconfinedTrap { .. }
                | Error::TruncationOverflow { .. }
                | Error::NonConvergence { .. }
                | Error::AmbiguousFit { .. }
                | Error::McAborted { .. }
        )
    }
}

impl Error {
    /// True for bad configuration, bad input data or missing inputs.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_config(),
            Error::InvalidParameter(_)
            | Error::InconsistentFrequencies(_)
            | Error::InvalidSideband { .. }
            | Error::MissingInput(_)
            | Error::Config(_)
            | Error::Json(_)
            | Error::Csv(_) => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
