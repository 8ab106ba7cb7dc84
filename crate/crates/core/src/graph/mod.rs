//! Heterogeneous graphs, meta-paths, and the homogeneous graphs meta-paths
//! induce over the target node type.

mod hetero;
mod metapath;

pub use hetero::{HeteroGraph, HeteroGraphBuilder, NodeType, NodeTypeId, Relation, RelationId};
pub use metapath::{
    compose_all, compose_metapath, validate_metapath, MetaPathGraph, MetaPathSpec, Step,
};
