pub mod demos;
pub mod eval;
pub mod net;
pub mod numerics;
pub mod sim;
pub mod train;

pub use numerics::{Tensor, TensorError};
