//! Compositional-memory visual question answering.
//!
//! A question is read token by token by a language LSTM. At every step a bank of region LSTMs
//! (one shared parameter set, one state per image region) reads the question encoding and the
//! previous episode, a scalar gate weighs each region, and the gated region outputs are pooled
//! into a new episode. An answer LSTM combines language, episode and global image context and
//! decodes the answer one token at a time.

pub mod cells;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
pub use model::{forward, masked_loss, predict_answer, NetworkConfig, QSource, Variant, VqaNetwork};
pub use numerics::{ParamStore, Tape, Tensor, Var};
