//! Per-meta-path GCN encoders, attention fusion, bilinear discriminators and
//! the combined fine/coarse mutual-information loss.

pub mod checkpoint;
mod config;
mod layers;
mod params;

use std::sync::Arc;

pub use config::HemiConfig;
pub use layers::{
    attention_scores, bce_pair, coarse_logits, corrupt, disc_coarse, disc_fine, encode_metapath,
    fine_logits, forward, forward_per_view, fuse, gcn_normalize, hemi_loss, summary, ForwardPass,
};
pub use params::{EncoderParams, EncoderVars, ModelParams, ParamVars};

use crate::error::{Error, Result};
use crate::graph::MetaPathGraph;
use crate::tensor::{SparseMatrix, Tape, Tensor};

/// Normalized meta-path adjacencies plus the target-node feature matrix:
/// everything a forward pass reads besides the parameters.
#[derive(Clone, Debug)]
pub struct ModelInputs {
    pub names: Vec<String>,
    pub adjs: Vec<Arc<SparseMatrix>>,
    pub features: Tensor,
}

impl ModelInputs {
    pub fn new(graphs: &[MetaPathGraph], features: Tensor) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("at least one meta-path is required".into()));
        }
        let n = graphs[0].node_count();
        if let Some(g) = graphs.iter().find(|g| g.node_count() != n) {
            return Err(Error::InvalidArgument(format!(
                "meta-path `{}` has {} nodes, expected {n}",
                g.metapath.name,
                g.node_count()
            )));
        }
        if features.rank() != 2 || features.rows() != n {
            return Err(Error::shape("ModelInputs", &[n, 0], features.shape()));
        }
        if !features.is_finite() {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(ModelInputs {
            names: graphs.iter().map(|g| g.metapath.name.clone()).collect(),
            adjs: graphs.iter().map(|g| Arc::new(gcn_normalize(g))).collect(),
            features,
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_metapaths(&self) -> usize {
        self.adjs.len()
    }
}

/// Per-meta-path views, their summaries, attention weights and the fused
/// representation, all detached from any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub views: Vec<Tensor>,
    pub summaries: Vec<Tensor>,
    pub beta: Vec<f64>,
    pub fused: Tensor,
}

/// Clean forward pass with the given parameters.
pub fn embed(params: &ModelParams, inputs: &ModelInputs) -> Result<EmbeddingSet> {
    if params.in_dim() != inputs.in_dim() {
        return Err(Error::shape(
            "embed",
            &[params.in_dim()],
            &[inputs.in_dim()],
        ));
    }
    let tape = Tape::new();
    let vars = params.on_tape(&tape);
    let x = tape.constant(inputs.features.clone());
    let pass = forward(&tape, &vars, &inputs.adjs, x)?;
    let summaries = pass
        .views
        .iter()
        .map(|&z| summary(z).map(|s| (*s.value()).clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddingSet {
        views: pass.views.iter().map(|z| (*z.value()).clone()).collect(),
        summaries,
        beta: pass.beta.value().data().to_vec(),
        fused: (*pass.fused.value()).clone(),
    })
}
