//! Dense tensors, named parameters and the reverse-mode tape.

mod param;
mod tape;
mod tensor;

pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{log_sum_exp, sigmoid, softmax, ElementwiseKind, Faults, Tape, Var};
pub use tensor::Tensor;
