//! Minimal tensor engine with reverse-mode differentiation.
//!
//! Everything runs in 64-bit floats on the CPU. The op set is exactly what
//! the video predictor needs: elementwise arithmetic, matmul, stride-1 "same"
//! convolution, sigmoid/tanh, channel concat/slice, and an MSE loss.

mod adam;
mod kernels;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
