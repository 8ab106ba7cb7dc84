//! Numeric substrate: dense and sparse matrices, a reverse-mode tape, Adam,
//! and tensor file formats.

mod adam;
mod dense;
pub mod io;
mod sparse;
mod tape;

pub use adam::AdamState;
pub use dense::Tensor;
pub use sparse::SparseMatrix;
pub use tape::{log_sigmoid, sigmoid_scalar as sigmoid, Gradients, Tape, Var};
