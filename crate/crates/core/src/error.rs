use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Root enumeration stopped before the requested number of roots was found.
    #[error("incomplete root enumeration for order {order}: found {found} of {requested} roots below {limit}")]
    IncompleteEnumeration {
        order: u32,
        found: usize,
        requested: usize,
        limit: f64,
    },

    /// The two independent estimates of the mix coefficient disagree.
    #[error("root quality check failed for mode ({order}, {index}): {detail}")]
    RootQuality { order: u32, index: usize, detail: String },

    /// The evaluation time lies below the certified truncation time.
    #[error("truncation not certified at t = {t:e} s (earliest trusted time {t_min:e} s)")]
    NotCertified { t: f64, t_min: f64 },

    /// The requested truncation needs more modes than can be enumerated.
    #[error("truncation needs eigenvalues beyond {limit}; achievable t_min = {achievable_t_min:e} s")]
    TruncationUnreachable { limit: f64, achievable_t_min: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Invalid physical or simulation configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
