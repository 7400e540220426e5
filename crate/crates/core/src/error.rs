use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("non-finite value in {context}")]
    Numeric { context: String },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("training loss became non-finite at step {step}")]
    NonFiniteLoss {
        step: usize,
        last_good: Box<crate::field::FieldModel>,
    },

    #[error("degenerate posterior: every weight underflowed")]
    DegeneratePosterior,

    #[error("angle undefined for a zero vector ({0})")]
    UndefinedAngle(&'static str),

    #[error("singular radial family: d_hat = 0")]
    SingularFamily,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(values: &[f64], context: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { context: context() })
    }
}
