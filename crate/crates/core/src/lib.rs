//! Self-supervised embeddings for heterogeneous graphs.
//!
//! Each meta-path induces a homogeneous graph over the target node type.
//! One GCN encoder per meta-path produces a view of every node, an attention
//! layer fuses the views, and training maximizes a Jensen-Shannon estimate of
//! the mutual information between each view and the fused representation.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
