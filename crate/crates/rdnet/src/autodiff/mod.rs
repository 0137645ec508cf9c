//! Minimal reverse-mode differentiation engine: exactly the tensor
//! operations, losses, and optimizer the two networks need.

mod gradcheck;
mod param;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use param::{adam_step, AdamHyper, AdamState, ParamSet, Parameter};
pub use rng::RngState;
pub use tape::{Gradients, Tape, ValueId};
pub use tensor::{Scalar, Tensor};
