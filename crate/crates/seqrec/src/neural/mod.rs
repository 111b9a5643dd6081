//! Minimal dense-tensor kernel with hand-written backward passes: just
//! enough machinery for an embedding lookup, two LSTM layers, a small
//! feed-forward head, binary cross-entropy, and plain SGD.
//!
//! Everything is 64-bit and single-threaded in the training path so gradient
//! checks can use tight tolerances and runs are bit-reproducible.

mod checkpoint;
mod loss;
mod lstm;
mod matrix;
mod ops;
mod params;

pub use checkpoint::{load_envelope, save_envelope, Envelope, NamedTensor, CHECKPOINT_VERSION};
pub use loss::{bce_loss, LossKind, PROB_CLAMP};
pub use lstm::{lstm_step, lstm_step_backward, LstmState, LstmStepCache, RecurrentCellParams};
pub use matrix::Matrix;
pub use ops::{
    affine, affine_backward, embed, embed_backward, relu, relu_backward, sigmoid,
    sigmoid_backward,
};
pub use params::{glorot_uniform, ParamId, ParameterSet};
