//! Planted-partition heterogeneous graphs.
//!
//! Target nodes (`paper`) are split into equal blocks. Every relation links
//! papers to a second node type whose nodes are also split into blocks; a
//! paper links to a same-block node with probability `intra` and to any other
//! with probability `inter`. Each paper is labeled with its block id.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, FeatureSource, Labels};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraphBuilder, MetaPathSpec};
use crate::tensor::Tensor;

pub const TARGET: &str = "paper";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRelation {
    pub name: String,
    /// Node type on the far side; relations may share one.
    pub node_type: String,
    pub per_block: usize,
    pub intra: f64,
    pub inter: f64,
}

impl SyntheticRelation {
    pub fn new(name: &str, node_type: &str, per_block: usize, intra: f64, inter: f64) -> Self {
        SyntheticRelation {
            name: name.into(),
            node_type: node_type.into(),
            per_block,
            intra,
            inter,
        }
    }

    /// `paper -> X -> paper` meta-path text for this relation.
    pub fn metapath(&self) -> String {
        format!("{0}.~{0}", self.name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub blocks: usize,
    pub papers_per_block: usize,
    pub relations: Vec<SyntheticRelation>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Three blocks of 30 papers with an author and a subject relation.
    fn default() -> Self {
        SyntheticSpec {
            blocks: 3,
            papers_per_block: 30,
            relations: vec![
                SyntheticRelation::new("written_by", "author", 10, 0.3, 0.01),
                SyntheticRelation::new("about", "subject", 4, 0.5, 0.02),
            ],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Meta-path texts, one per relation.
    pub fn metapaths(&self) -> Vec<String> {
        self.relations.iter().map(SyntheticRelation::metapath).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.papers_per_block == 0 {
            return Err(Error::InvalidArgument("synthetic graph with zero papers".into()));
        }
        if self.relations.is_empty() {
            return Err(Error::InvalidArgument("synthetic graph needs a relation".into()));
        }
        for r in &self.relations {
            if r.per_block == 0 {
                return Err(Error::InvalidArgument(format!(
                    "relation `{}` has zero nodes per block",
                    r.name
                )));
            }
            for p in [r.intra, r.inter] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidArgument(format!(
                        "relation `{}`: probability {p} outside [0, 1]",
                        r.name
                    )));
                }
            }
            if r.node_type == TARGET {
                return Err(Error::InvalidArgument(format!(
                    "relation `{}` must link papers to another type",
                    r.name
                )));
            }
        }
        Ok(())
    }
}

/// Samples the graph. Features are the identity; every paper is labeled.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.blocks * spec.papers_per_block;
    let block = |i: usize, per: usize| i / per;

    let mut b = HeteroGraphBuilder::new();
    let paper = b.node_type(TARGET, n);
    let mut node_ids = vec![(0..n).map(|i| format!("p{i}")).collect::<Vec<_>>()];
    let mut type_ids: Vec<(String, crate::graph::NodeTypeId, usize)> = Vec::new();
    for r in &spec.relations {
        let count = spec.blocks * r.per_block;
        let t = match type_ids.iter().find(|(name, _, _)| name == &r.node_type) {
            Some(&(_, t, c)) if c == count => t,
            Some(_) => {
                return Err(Error::InvalidArgument(format!(
                    "node type `{}` used with different sizes",
                    r.node_type
                )))
            }
            None => {
                let t = b.node_type(&r.node_type, count);
                let prefix = r.node_type.chars().next().unwrap_or('x');
                node_ids.push((0..count).map(|i| format!("{prefix}{}_{i}", t.0)).collect());
                type_ids.push((r.node_type.clone(), t, count));
                t
            }
        };
        let rel = b.relation(&r.name, paper, t);
        for p in 0..n {
            for x in 0..count {
                let same = block(p, spec.papers_per_block) == block(x, r.per_block);
                if rng.gen_bool(if same { r.intra } else { r.inter }) {
                    b.edge(rel, p, x);
                }
            }
        }
    }
    let graph = b.build(paper)?;
    let labels = Labels {
        classes: (0..spec.blocks).map(|k| format!("block{k}")).collect(),
        assigned: (0..n).map(|p| (p, block(p, spec.papers_per_block))).collect(),
    };
    Ok(Dataset {
        graph,
        node_ids,
        features: Tensor::identity(n),
        feature_source: FeatureSource::Identity,
        labels: Some(labels),
    })
}

/// Parses the spec's meta-path texts against the generated graph.
pub fn metapath_specs(spec: &SyntheticSpec, dataset: &Dataset) -> Result<Vec<MetaPathSpec>> {
    spec.metapaths()
        .iter()
        .map(|m| MetaPathSpec::parse(m, &dataset.graph))
        .collect()
}
