//! Dense tensors, differentiable kernels, a gradient tape and the optimizer.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use ops::{Activation, PoolMode};
pub use optim::{adam_step, cosine_lr, AdamState, LrSchedule, Param};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor, TensorError};
