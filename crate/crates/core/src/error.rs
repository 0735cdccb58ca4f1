use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-side contract was violated (length mismatch, empty input, ...).
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what} index {index} out of range (size {size})")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("value outside its domain: {0}")]
    Domain(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("cannot sample corruptions: {0}")]
    Sampling(String),
    #[error("calibrator fit failed: {0}")]
    Fit(String),
    /// Newton iterations ran out before the gradient norm tolerance was met.
    #[error("platt fit did not converge after {iterations} iterations (a={a}, b={b}, |grad|={grad_norm:e})")]
    NonConvergence {
        iterations: usize,
        a: f64,
        b: f64,
        grad_norm: f64,
    },
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
