//! Reverse-mode differentiation over an explicit operation tape.

mod graph;
pub mod gradcheck;
pub mod kernels;

pub use graph::{Backward, Gradients, Graph, Var};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};
pub use kernels::{Unary, UpsampleMode};
