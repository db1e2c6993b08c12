use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("model failed validation:\n{0}")]
    InvalidModel(ValidationReport),

    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("history window is malformed: {0}")]
    MalformedWindow(String),

    #[error("window has size {got}, expected {expected}")]
    WindowMismatch { expected: usize, got: usize },

    /// The observation sequence is impossible; `step` is 0 for the initial
    /// observation and k+1 for the observation following the k-th action.
    #[error("zero likelihood at step {step}: history is impossible under this prior")]
    ZeroLikelihood { step: usize },

    #[error("enumeration needs {required} items, which exceeds the limit of {limit}")]
    CapacityExceeded { required: u128, limit: u64 },

    #[error("quantized belief set is empty")]
    EmptySet,

    #[error("value iteration did not converge in {max_iter} iterations (last residual {residual:e})")]
    NotConverged { max_iter: usize, residual: f64 },

    #[error("malformed kernel: {0}")]
    MalformedKernel(String),

    #[error("state metric is degenerate: d({0},{1}) = 0 for distinct states")]
    DegenerateMetric(usize, usize),

    #[error("precondition violated: {condition} (off by {margin:e})")]
    PreconditionViolated { condition: String, margin: f64 },

    #[error("prior is not absolutely continuous w.r.t. the anchor: anchor puts no mass on state {state}")]
    AbsoluteContinuityViolated { state: usize },

    #[error("cannot normalize curve `{curve}`: its N=0 value is zero")]
    DegenerateNormalization { curve: &'static str },
}
