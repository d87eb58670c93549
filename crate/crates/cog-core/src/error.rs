use alloc::string::String;

/// Errors raised by the core library.
///
/// Every fallible operation reports a contract violation through one of
/// these variants rather than panicking, so callers (CLI, tests) can match
/// on the failure class.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Tensor shapes incompatible with the requested operation.
    Shape(String),
    /// A value that must be finite came out NaN or infinite.
    NonFinite(String),
    /// Configuration outside its documented domain.
    Config(String),
    /// Malformed or inconsistent dataset.
    Data(String),
    /// Unknown environment, condition, or method identifier.
    Unknown(String),
    /// Q-values on the data distribution exceeded the divergence guard.
    Diverged { step: u64, mean_abs_q: f64 },
}

impl core::fmt::Display for CoreError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoreError::Shape(m) => write!(f, "shape error: {m}"),
            CoreError::NonFinite(m) => write!(f, "non-finite value: {m}"),
            CoreError::Config(m) => write!(f, "config error: {m}"),
            CoreError::Data(m) => write!(f, "data error: {m}"),
            CoreError::Unknown(m) => write!(f, "unknown identifier: {m}"),
            CoreError::Diverged { step, mean_abs_q } => write!(
                f,
                "training diverged at step {step}: mean |Q| on data = {mean_abs_q:.3e}"
            ),
        }
    }
}

impl core::error::Error for CoreError {}
