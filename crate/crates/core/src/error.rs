use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} is rank deficient (rank {rank}, need {needed})")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        needed: usize,
    },

    #[error("{0} is not symmetric positive semidefinite")]
    NotPositiveSemidefinite(&'static str),

    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    #[error("insufficient data: {have} transition pairs, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            actual,
        })
    }
}
