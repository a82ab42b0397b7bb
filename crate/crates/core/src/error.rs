use thiserror::Error;

/// Errors raised by conflict validation, schedules, engines, oracles and the
/// simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("value {value} outside of domain: {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid gamma specification: {0}")]
    InvalidSpec(String),

    #[error("conflict sets are not monotone: {j} is in the conflict set of {i} but not of {k}")]
    NonMonotoneConflicts { j: usize, k: usize, i: usize },

    #[error("conflict set of hypothesis {index} is not a contiguous suffix")]
    NonContiguousSuffix { index: usize },

    #[error("conflict structure is not in batch form at hypothesis {index}")]
    NotBatchForm { index: usize },

    #[error("conflict set of hypothesis {index} references invalid index {conflict}")]
    InvalidConflict { index: usize, conflict: usize },

    #[error("ledger entry {index} has no recorded indicators")]
    IncompleteLedger { index: usize },

    #[error("ledger indices must be consecutive: expected {expected}, got {got}")]
    LedgerGap { expected: usize, got: usize },

    #[error("ledger entry {index} has no alpha_c annotation")]
    MissingAlphaC { index: usize },

    #[error("gamma sequence is not nonincreasing at {index}")]
    NonMonotoneGamma { index: usize },

    #[error("all future weight of row {row} is blocked by conflicts")]
    DegenerateRenormalization { row: usize },

    #[error("horizon {requested} exceeds the configured cap {cap}")]
    HorizonExceeded { requested: usize, cap: usize },

    #[error("indicators of hypothesis {needed} are required for the level of {index}")]
    MissingIndicator { index: usize, needed: usize },

    #[error("weight g*[{j},{i}] = {weight} is nonzero although {j} conflicts with {i}")]
    ScheduleViolation { j: usize, i: usize, weight: f64 },

    #[error("weight g[{j},{i}] changed after the level of {j} was issued")]
    FrozenRowViolation { j: usize, i: usize },

    #[error("unknown hypothesis index {0}")]
    UnknownIndex(usize),

    #[error("hypothesis {0} was already observed")]
    DuplicateObservation(usize),

    #[error("registration out of order: expected index {expected}, got {got}")]
    OutOfOrderRegistration { expected: usize, got: usize },

    #[error("batch containing hypothesis {index} is not complete")]
    BatchIncomplete { index: usize },

    #[error("invalid W0 = {w0} for overall level {alpha}")]
    InvalidW0 { w0: f64, alpha: f64 },

    #[error("no joint null model available: {0}")]
    ModelUnavailable(String),

    #[error("quadrature did not converge (last change {delta:e} with {nodes} nodes)")]
    QuadratureNonConvergence { delta: f64, nodes: usize },

    #[error("horizon {n} too large for enumeration (cap {cap})")]
    HorizonTooLarge { n: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no outcomes to aggregate")]
    EmptyOutcomeSet,

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
