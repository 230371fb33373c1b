use std::io;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Training,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("grid mismatch: {0}")]
    Mismatch(String),

    #[error("singular state: 1 - d = {0:e} is below the admissible threshold")]
    Singular(f64),

    #[error("fixed-point iteration did not converge at step {step} within {iters} iterations")]
    NonConvergence { step: usize, iters: usize },

    #[error("tape was recorded for layer dims {tape:?}, network has {net:?}")]
    TapeMismatch { tape: Vec<usize>, net: Vec<usize> },

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("observations carry no signal: every observed compartment is constant")]
    NoSignal,

    #[error("training diverged at iteration {iter}: {detail}")]
    Divergence { iter: usize, detail: String },

    #[error("non-finite value at iteration {iter} ({term})")]
    NonFinite { iter: usize, term: String },

    #[error("invalid record at row {row}: {msg}")]
    InvalidRecord { row: usize, msg: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("population {population} must exceed the largest confirmed count {max_confirmed}")]
    Population { population: u64, max_confirmed: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{failed} of {total} bootstrap replicates failed")]
    Bootstrap { failed: usize, total: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Domain(_) => ErrorKind::Config,
            Error::Index { .. }
            | Error::Mismatch(_)
            | Error::Singular(_)
            | Error::NonConvergence { .. }
            | Error::TapeMismatch { .. } => ErrorKind::Numeric,
            Error::EmptyObservations
            | Error::NoSignal
            | Error::Divergence { .. }
            | Error::NonFinite { .. }
            | Error::Bootstrap { .. } => ErrorKind::Training,
            Error::InvalidRecord { .. }
            | Error::Parse { .. }
            | Error::Population { .. }
            | Error::Checkpoint(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
