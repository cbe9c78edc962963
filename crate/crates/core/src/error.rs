use crate::frontend::FrontendError;
use crate::lang::Ident;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("unbound procedure `{0}`")]
    UnboundProc(String),
    #[error("index {index} out of range for `{name}` of length {len}")]
    IndexOutOfRange { name: String, index: String, len: usize },
    #[error("`{0}` is an array")]
    NotScalar(String),
    #[error("`{0}` is not an array")]
    NotArray(String),
    #[error("integer overflow")]
    Overflow,
    #[error("corrupt array pointer for `{0}`")]
    BadPointer(String),
    #[error("reversal information exhausted: stack `{0}` is empty")]
    DeltaEmpty(String),
    #[error("stack `{stack}` head carries identifier {found}, expected {expected}")]
    DeltaMismatch { stack: String, expected: Ident, found: Ident },
    #[error("no identifier left to reverse")]
    SequencerUnderflow,
    #[error("copy record does not match the body it is installed into: {0}")]
    CopyMismatch(String),
    #[error("redex {0} is not enabled")]
    NotEnabled(String),
    #[error("step budget of {0} transitions exceeded")]
    StepBudget(u64),
    #[error("replay diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("{0}")]
    Invalid(String),
}

pub type ExecResult<T> = Result<T, ExecError>;
