//! Dense `f64` tensors and a reverse-mode tape.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many};
pub use graph::{Gradients, Graph, Var, GELU_CUBIC, GELU_SQRT_2_OVER_PI};
pub use tensor::Tensor;
