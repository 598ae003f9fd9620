use thiserror::Error;

use crate::system::SubsystemWitness;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed system document: {0}")]
    Syntax(String),

    #[error("invalid system: {0}")]
    Validation(String),

    #[error("block forbidden: ba = e (key \"{0}\")")]
    ForbiddenBlock(String),

    #[error("missing block \"{0}\"")]
    MissingBlock(String),

    #[error("block \"{key}\" has shape {found:?}, expected {expected:?}")]
    BlockShape {
        key: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite entry in \"{0}\"")]
    NonFinite(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("system is reducible")]
    Reducible(Box<SubsystemWitness>),

    #[error("dominant eigentuple did not converge: {0}")]
    NoConvergence(String),

    #[error("eigentuple is not strictly positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("twin Perron value {0} deviates from 1")]
    TwinNormalization(f64),

    #[error("resolvent is singular at eps = {eps}: pivot ratio {pivot_ratio:e}")]
    SingularResolvent { eps: f64, pivot_ratio: f64 },

    #[error("spectral ambiguity: {0}")]
    Ambiguity(String),

    #[error("systems equivalent; Q undefined")]
    SystemsEquivalent,

    #[error("numerical contract violated: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for input-document problems (syntax, missing or malformed blocks).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Syntax(_)
                | Error::Validation(_)
                | Error::ForbiddenBlock(_)
                | Error::MissingBlock(_)
                | Error::BlockShape { .. }
                | Error::NonFinite(_)
        )
    }

    /// True for failures of the eigenvalue-1 analysis.
    pub fn is_spectral(&self) -> bool {
        matches!(
            self,
            Error::Ambiguity(_) | Error::SystemsEquivalent | Error::Contract(_) | Error::SingularResolvent { .. }
        )
    }
}
