use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeTypeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
}

/// A directed relation type with its signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub src: NodeTypeId,
    pub dst: NodeTypeId,
}

/// Typed node sets plus typed directed edge lists.
///
/// Node indices are dense per type. Edges of every relation are kept sorted
/// and free of duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeteroGraph {
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
    edges: Vec<Vec<(usize, usize)>>,
    target: NodeTypeId,
}

impl HeteroGraph {
    pub fn new(
        node_types: Vec<NodeType>,
        relations: Vec<Relation>,
        mut edges: Vec<Vec<(usize, usize)>>,
        target: NodeTypeId,
    ) -> Result<Self> {
        if node_types.len() + relations.len() <= 2 {
            return Err(Error::Graph(format!(
                "{} node types and {} relations; a heterogeneous graph needs more than 2 in total",
                node_types.len(),
                relations.len()
            )));
        }
        if target.0 >= node_types.len() {
            return Err(Error::Graph(format!("unknown target type id {}", target.0)));
        }
        if edges.len() != relations.len() {
            return Err(Error::Graph(format!(
                "{} edge lists for {} relations",
                edges.len(),
                relations.len()
            )));
        }
        let mut seen = HashMap::new();
        for t in &node_types {
            if seen.insert(t.name.as_str(), ()).is_some() {
                return Err(Error::Graph(format!("duplicate node type `{}`", t.name)));
            }
        }
        let mut seen = HashMap::new();
        for (rel, list) in relations.iter().zip(edges.iter_mut()) {
            if seen.insert(rel.name.as_str(), ()).is_some() {
                return Err(Error::Graph(format!("duplicate relation `{}`", rel.name)));
            }
            let (Some(src), Some(dst)) = (node_types.get(rel.src.0), node_types.get(rel.dst.0))
            else {
                return Err(Error::Graph(format!(
                    "relation `{}` refers to an unknown node type",
                    rel.name
                )));
            };
            for &(s, d) in list.iter() {
                if s >= src.count || d >= dst.count {
                    return Err(Error::Graph(format!(
                        "edge ({s}, {d}) of `{}` out of range for {}x{}",
                        rel.name, src.count, dst.count
                    )));
                }
            }
            list.sort_unstable();
            list.dedup();
        }
        Ok(HeteroGraph {
            node_types,
            relations,
            edges,
            target,
        })
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, id: RelationId) -> &Relation {
        &self.relations[id.0]
    }

    pub fn edges(&self, id: RelationId) -> &[(usize, usize)] {
        &self.edges[id.0]
    }

    pub fn target_type(&self) -> NodeTypeId {
        self.target
    }

    pub fn node_count(&self, t: NodeTypeId) -> usize {
        self.node_types[t.0].count
    }

    /// |V_t|, the number of nodes of the target type.
    pub fn target_count(&self) -> usize {
        self.node_count(self.target)
    }

    pub fn type_name(&self, t: NodeTypeId) -> &str {
        &self.node_types[t.0].name
    }

    pub fn type_id(&self, name: &str) -> Option<NodeTypeId> {
        self.node_types
            .iter()
            .position(|t| t.name == name)
            .map(NodeTypeId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .map(RelationId)
    }

    pub fn total_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }
}

/// Incremental construction of a [`HeteroGraph`].
#[derive(Default)]
pub struct HeteroGraphBuilder {
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
    edges: Vec<Vec<(usize, usize)>>,
}

impl HeteroGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_type(&mut self, name: &str, count: usize) -> NodeTypeId {
        self.node_types.push(NodeType {
            name: name.to_string(),
            count,
        });
        NodeTypeId(self.node_types.len() - 1)
    }

    pub fn relation(&mut self, name: &str, src: NodeTypeId, dst: NodeTypeId) -> RelationId {
        self.relations.push(Relation {
            name: name.to_string(),
            src,
            dst,
        });
        self.edges.push(Vec::new());
        RelationId(self.relations.len() - 1)
    }

    pub fn edge(&mut self, rel: RelationId, src: usize, dst: usize) -> &mut Self {
        self.edges[rel.0].push((src, dst));
        self
    }

    pub fn edges(&mut self, rel: RelationId, pairs: &[(usize, usize)]) -> &mut Self {
        self.edges[rel.0].extend_from_slice(pairs);
        self
    }

    pub fn build(self, target: NodeTypeId) -> Result<HeteroGraph> {
        HeteroGraph::new(self.node_types, self.relations, self.edges, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_removed() {
        let mut b = HeteroGraphBuilder::new();
        let p = b.node_type("paper", 2);
        let a = b.node_type("author", 1);
        let pa = b.relation("writes", p, a);
        b.edges(pa, &[(1, 0), (0, 0), (1, 0)]);
        let g = b.build(p).unwrap();
        assert_eq!(g.edges(pa), &[(0, 0), (1, 0)]);
        assert_eq!(g.target_count(), 2);
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        let mut b = HeteroGraphBuilder::new();
        let p = b.node_type("paper", 2);
        let a = b.node_type("author", 1);
        let pa = b.relation("writes", p, a);
        b.edge(pa, 0, 1);
        assert!(b.build(p).is_err());
    }

    #[test]
    fn needs_more_than_two_types_and_relations() {
        let mut b = HeteroGraphBuilder::new();
        let p = b.node_type("paper", 2);
        b.relation("cites", p, p);
        let err = b.build(p).unwrap_err();
        assert!(err.to_string().contains("more than 2"));
    }
}
