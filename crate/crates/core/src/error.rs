use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command-line driver for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: schema mismatch: {detail}")]
    SchemaMismatch { path: PathBuf, detail: String },
    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: u64, detail: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("series too short: need {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("join produced no counties")]
    EmptyJoin,
    #[error("county {fips}: gap of {days} days in `{feature}` exceeds the interpolation limit")]
    UnbridgeableGap { fips: String, feature: String, days: usize },
    #[error("matrix not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("no feasible fit: {0}")]
    NoFeasibleFit(String),
    #[error("numeric fault at step {step}: {detail}")]
    NumericFault { step: usize, detail: String },
    /// Training produced a non-finite loss; `checkpoint` holds the last good
    /// parameters in checkpoint format.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, checkpoint: Box<String> },
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("unknown outcome `{0}`")]
    UnknownOutcome(String),
    #[error("unknown state code `{0}`")]
    UnknownState(String),
    #[error("model mismatch: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidConfig(_) | ConfigMismatch(_) | UnknownOutcome(_) => ErrorKind::Config,
            NotSymmetric { .. } | NoConvergence { .. } | NoFeasibleFit(_) | NumericFault { .. } | Diverged { .. } => {
                ErrorKind::Numeric
            }
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}
