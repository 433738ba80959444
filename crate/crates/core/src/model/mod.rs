//! Compact residual CNN over single-channel spectrogram images.
//!
//! Everything runs on `f64` tensors in NCHW layout with hand-written
//! backpropagation. Training is single-threaded so that a fixed seed gives
//! bitwise-identical parameters.

mod adam;
pub mod layers;
mod loss;
mod net;
mod tensor;
mod train;
mod weights;

pub use adam::{AdamConfig, AdamState};
pub use loss::softmax_xent;
pub use net::{Gradients, Graph, Model, ModelSpec, StageSpec};
pub use tensor::Tensor;
pub use train::{
    predict, predict_source, train, EpochLog, ImageSource, InMemoryImages, Prediction, TrainConfig,
    TrainReport,
};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC};

/// Number of output classes: N, S, V, F.
pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    ShapeMismatch(String),
    GraphNotEvaluated,
    EmptyDataset,
    BadMagic,
    NonFinite { epoch: usize, batch: usize },
    Io(String),
}

impl std::fmt::Display for ModelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelError::ShapeMismatch(what) => write!(f, "shape mismatch: {what}"),
            ModelError::GraphNotEvaluated => write!(f, "backward called before forward"),
            ModelError::EmptyDataset => write!(f, "training set is empty"),
            ModelError::BadMagic => write!(f, "not a CPW1 weight file"),
            ModelError::NonFinite { epoch, batch } => {
                write!(f, "non-finite value in epoch {epoch}, batch {batch}")
            }
            ModelError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}
