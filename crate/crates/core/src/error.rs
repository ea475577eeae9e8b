use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tensor product too large: {0} > 2^20")]
    TooLarge(usize),

    #[error("{routine} did not converge after {sweeps} sweeps")]
    NoConvergence { routine: &'static str, sweeps: usize },

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("state set is not pairwise orthogonal: |<{0}|{1}>| = {2:.3e}")]
    NotOrthogonal(String, String, f64),

    #[error("measurement is not orthogonality preserving: {0}")]
    NotOplm(String),

    #[error("non-commuting OPLM space: {0}")]
    NonCommuting(String),

    #[error("unknown fixture or protocol `{0}`")]
    Unknown(String),

    #[error(transparent)]
    Parse(#[from] crate::qset::ParseError),

    #[error("malformed protocol: {0}")]
    Protocol(String),

    #[error("refused: {0}")]
    Refused(String),
}
