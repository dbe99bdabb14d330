use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("inconclusive precision: enclosure of ‖x - {k}α‖ contains zero")]
    InconclusivePrecision { k: i64 },

    #[error("scan range {requested} exceeds cap {cap}")]
    ResourceCap { requested: u128, cap: u128 },

    #[error("inadmissible scale k={k}: {reason}")]
    InadmissibleScale { k: usize, reason: String },

    #[error("scale search exceeded cap at node {path}: {diagnostics}")]
    CapExceeded { path: String, diagnostics: String },

    #[error("construction invariant violated: {0}")]
    Violation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("approximant ladder unstable: {0}")]
    Instability(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
