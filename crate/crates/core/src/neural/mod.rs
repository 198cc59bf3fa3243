//! Minimal reverse-mode differentiation engine and the recurrent building
//! blocks used by the generation models.

pub mod attention;
pub mod checkpoint;
pub mod dropout;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod tensor;

use thiserror::Error;

pub use attention::{AttentionParams, additive_attention};
pub use dropout::{Dropout, apply_dropout};
pub use graph::{Gradients, Graph, NodeId};
pub use loss::{log_softmax, softmax_cross_entropy};
pub use lstm::{BiLstm, LstmCell, LstmStack, StackState, bilstm_encode, lstm_step};
pub use optim::{Adam, clip_gradients};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("attention needs at least one key")]
    EmptyKeys,
    #[error("keep probability {0} outside (0, 1]")]
    ProbabilityRange(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;
