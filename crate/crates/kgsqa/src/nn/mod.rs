//! Minimal trainable-network substrate: parameter containers, reverse-mode
//! autodiff, LSTM encoders, additive attention, Adam, and the
//! finite-difference gradient-check harness.

pub mod adam;
pub mod attention;
pub mod gradcheck;
pub mod lstm;
pub mod store;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use attention::AdditiveAttention;
pub use gradcheck::grad_check;
pub use lstm::{Encoded, LstmCell, LstmEncoder, LstmEncoderConfig, Mode};
pub use store::{uniform_in, Grads, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
