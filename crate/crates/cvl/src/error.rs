use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("cannot apply a {0}")]
    NotAFunction(&'static str),
    #[error("procedure expects {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("`{op}` expects {expected}, got {found}")]
    Type {
        op: &'static str,
        expected: &'static str,
        found: &'static str,
    },
    #[error("division by zero")]
    DivisionByZero,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-ground value where a ground value is required: {0}")]
    NonGround(&'static str),
    #[error("value at perturbation level {found} escaped level {expected}")]
    Level { expected: u32, found: u32 },
    #[error("interrupt limit {limit} not below the computation's {steps} steps")]
    RanToCompletion { limit: u64, steps: u64 },
    #[error("computation was interrupted where a value was required")]
    Interrupted,
    #[error("invalid step budget: {0}")]
    Budget(String),
    #[error("tape limit of {0} cells exceeded")]
    TapeLimit(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type EvalResult<T> = Result<T, EvalError>;
