use thiserror::Error;

/// Errors produced by the estimation, oracle and training routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum UbsrError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse {what} from {input:?}: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },

    /// The acceptance set `{t : L(t) <= lambda}` is empty up to the expansion cap.
    #[error("acceptance set is empty: L(t) > {lambda} for every t up to {cap:e}")]
    EmptyAcceptanceSet { lambda: f64, cap: f64 },

    /// `L(t) <= lambda` even at the most negative bracket point, so the infimum is -inf.
    #[error("shortfall risk is unbounded below at level {lambda}")]
    UnboundedBelow { lambda: f64 },

    #[error("no sign change of q_n after {expansions} bracket doublings (last bracket [{lo}, {hi}])")]
    BracketFailure { lo: f64, hi: f64, expansions: u32 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shortfall risk is not differentiable here: {0}")]
    NotDifferentiable(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<UbsrError>,
    },
}

pub type Result<T> = std::result::Result<T, UbsrError>;

impl UbsrError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        UbsrError::InvalidParameter(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        UbsrError::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
