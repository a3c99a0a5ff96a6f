use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("attention row {0} is masked everywhere")]
    FullyMaskedRow(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("positional embedding does not match the configuration: {0}")]
    PeMismatch(String),
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64, trace: Vec<f64> },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] gdt_core::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
