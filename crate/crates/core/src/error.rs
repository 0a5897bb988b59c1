use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Values are carried as `f64` so the error type stays independent of the
/// scalar the computation ran in.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("series argument {s} outside the supported range |s| <= {bound}")]
    SeriesDomain { s: f64, bound: f64 },

    #[error("kernel {kernel} evaluated off its triangle at (x, y) = ({x}, {y})")]
    Ordering {
        kernel: &'static str,
        x: f64,
        y: f64,
    },

    #[error("point {x} outside [0, 1]")]
    OutOfDomain { x: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("controller synthesis requires q > lambda/(2 eps): got q = {q}, lambda/(2 eps) = {threshold}")]
    RobinGainTooSmall { q: f64, threshold: f64 },

    #[error("decay rate {value} violates bound {name} < {bound}")]
    Range {
        name: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("small-gain precondition fails: 2 C1 Ltilde ||k - h|| = {value} >= 1 with N = {modes}; increase N")]
    IncreaseModes { value: f64, modes: usize },

    #[error("no truncation N <= {max_modes} achieves 2 C1 Ltilde ||k - h|| < {target}")]
    ModesExhausted { max_modes: usize, target: f64 },

    #[error(
        "trigger invariant violated at t = {t}: m = {m}, d^2 = {d_sq}, -gamma m = {threshold}"
    )]
    TriggerInvariant {
        t: f64,
        m: f64,
        d_sq: f64,
        threshold: f64,
    },

    #[error("dwell statistics need at least 2 events, got {0}")]
    InsufficientEvents(usize),

    #[error("singular stepping matrix at pivot {0}")]
    Singular(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("initial condition {which} must vanish at x = 0 (got {value})")]
    Compatibility { which: &'static str, value: f64 },

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
