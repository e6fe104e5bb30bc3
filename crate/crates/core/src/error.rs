use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    Shape { op: &'static str, lhs: String, rhs: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Normal equations could not be factorized; the caller has to raise the ridge term.
    #[error("normal matrix is singular or not positive definite (ridge = {ridge}); raise the ridge term")]
    SingularSystem { ridge: f64 },

    #[error("non-finite gradient at timestep {timestep}")]
    NonFiniteGradient { timestep: usize },

    #[error("training diverged at epoch {epoch} (last good epoch: {last_good_epoch:?})")]
    Diverged {
        epoch: usize,
        last_good_epoch: Option<usize>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: impl ToString, rhs: impl ToString) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
