use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no connected map after {attempts} attempts")]
    InfeasibleMap { attempts: usize },

    #[error("reward category {0} out of range")]
    RewardCategory(usize),

    #[error("negative event weight {0}")]
    NegativeWeight(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("all observation likelihoods are zero")]
    DegenerateUpdate,

    #[error("data has rank zero")]
    RankZero,

    #[error("k = {k} exceeds the {distinct} distinct points")]
    TooFewDistinct { k: usize, distinct: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
