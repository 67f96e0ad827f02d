//! Dense matrices, reverse-mode differentiation and SVD.

mod io;
mod matrix;
mod svd;
mod tape;

pub use io::{read_archive, read_matrix, write_archive, write_matrix, Precision};
pub use matrix::{layer_norm, matmul, softmax_rows, Matrix};
pub use svd::{svd, Svd, MAX_SWEEPS};
pub use tape::{gelu, gradient, Gradients, Tape, Var};

