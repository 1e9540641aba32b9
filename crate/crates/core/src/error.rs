use thiserror::Error;

use crate::dist::RegularityWitness;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside support [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },

    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),

    #[error("density vanishes at {0}; virtual value undefined")]
    SingularDensity(f64),

    #[error("distribution is not regular: {0}")]
    Irregular(RegularityWitness),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative bid {bid} from agent {agent}")]
    NegativeBid { agent: usize, bid: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("allocation {requested} is unreachable; maximum achievable is {max}")]
    Unreachable { requested: f64, max: f64 },

    #[error("equivalent bid is undefined for zero allocation")]
    ZeroAllocation,

    #[error("unknown {kind} `{name}`; available: {available}")]
    Unknown {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
