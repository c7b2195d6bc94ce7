//! Dense matrices and a reverse-mode autodiff tape over them.

mod matrix;
mod tape;

pub use matrix::Matrix;
#[doc(hidden)]
pub use tape::{inject_fault, Fault};
pub use tape::{grad_check, Gradients, Tape, Var};

