use std::fmt;

use tlc_autograd::ParamStore;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("layout error: {0}")]
    Layout(String),
    #[error("insufficient frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },
    #[error("degenerate motion: {0}")]
    Degenerate(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("undefined metrics: {0}")]
    UndefinedMetrics(String),
    #[error("cancelled")]
    Cancelled,
    #[error("load error: {0}")]
    Load(String),
    #[error(transparent)]
    Training(Box<TrainingError>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-finite loss during training, with the parameters from the last step
/// whose loss was finite.
pub struct TrainingError {
    pub step: usize,
    pub loss: f64,
    pub last_good: ParamStore,
}

impl fmt::Debug for TrainingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainingError")
            .field("step", &self.step)
            .field("loss", &self.loss)
            .field("last_good_tensors", &self.last_good.len())
            .finish()
    }
}

impl fmt::Display for TrainingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training diverged at step {} (loss {})", self.step, self.loss)
    }
}

impl std::error::Error for TrainingError {}
