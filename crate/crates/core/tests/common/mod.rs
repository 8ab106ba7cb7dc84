#![allow(dead_code)]

use std::collections::BTreeSet;

use hemi::graph::{
    HeteroGraph, HeteroGraphBuilder, MetaPathGraph, MetaPathSpec, NodeTypeId, RelationId, Step,
};
use hemi::model::{forward, hemi_loss, HemiConfig, ModelInputs, ModelParams};
use hemi::tensor::{Tape, Tensor};
use hemi::train::{lp_loss, nc_loss};
use hemi::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- finite differences ----

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Hemi,
    NodeClassification,
    LinkPrediction,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Hemi => "hemi",
            Objective::NodeClassification => "nc",
            Objective::LinkPrediction => "lp",
        }
    }
}

/// Fixed 6-node, 2-meta-path instance with a fixed corruption so that the
/// loss is a deterministic function of the parameters.
pub struct GradInstance {
    pub inputs: ModelInputs,
    pub corrupted: Tensor,
    pub params: ModelParams,
    pub task: Tensor,
    pub labels: Vec<(usize, usize)>,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
    pub lambda: f64,
}

fn anonymous(name: &str) -> MetaPathSpec {
    MetaPathSpec {
        name: name.into(),
        steps: Vec::new(),
    }
}

impl GradInstance {
    pub fn new(seed: u64, layers: usize, lambda: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let mut graphs = Vec::new();
        for name in ["a", "b"] {
            let pairs: Vec<_> = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .filter(|_| rng.gen_bool(0.4))
                .collect();
            graphs.push(MetaPathGraph::from_pairs(anonymous(name), n, pairs).unwrap());
        }
        let features = Tensor::new(
            vec![n, 3],
            (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let corrupted = features.select_rows(&perm);
        let config = HemiConfig {
            dim: 4,
            attn_dim: 3,
            layers,
            ..HemiConfig::default()
        };
        let mut params = ModelParams::init(3, 2, &config, &mut rng).unwrap();
        // move slopes and attention bias off their initial constants
        for e in params.encoders.iter_mut() {
            e.slope = Tensor::scalar(rng.gen_range(0.1..0.4));
        }
        for b in params.b_sem.data_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        let task = Tensor::glorot(4, 4, &mut rng);
        GradInstance {
            inputs: ModelInputs::new(&graphs, features).unwrap(),
            corrupted,
            params,
            task,
            labels: vec![(0, 0), (2, 1), (3, 2), (5, 1)],
            positives: vec![(0, 1), (2, 4), (3, 5)],
            negatives: vec![(0, 5), (1, 3), (2, 2)],
            lambda,
        }
    }

    /// Loss value and analytic gradients (model groups, then the task head
    /// for supervised objectives).
    pub fn evaluate(
        &self,
        objective: Objective,
        params: &ModelParams,
        task: &Tensor,
    ) -> Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let vars = params.on_tape(&tape);
        let t = tape.var(task.clone());
        let x = tape.constant(self.inputs.features.clone());
        let clean = forward(&tape, &vars, &self.inputs.adjs, x)?;
        let loss = match objective {
            Objective::Hemi => {
                let xt = tape.constant(self.corrupted.clone());
                let neg = forward(&tape, &vars, &self.inputs.adjs, xt)?;
                hemi_loss(&tape, &clean, neg.fused, &vars, self.lambda)?
            }
            Objective::NodeClassification => {
                let logits = clean.fused.matmul(t)?;
                nc_loss(&tape, logits, &self.labels)?
            }
            Objective::LinkPrediction => {
                let h = clean.fused.matmul(t)?;
                lp_loss(h, &self.positives, &self.negatives)?
            }
        };
        let value = loss.item();
        let g = loss.backward()?;
        let mut grads = vars.grads(&g);
        if objective != Objective::Hemi {
            grads.push(g.get(t));
        }
        Ok((value, grads))
    }
}

/// Parameter group a named tensor belongs to.
pub fn group_of(name: &str) -> &'static str {
    if name.starts_with("encoder.") && name.contains(".weight.") {
        "W^P (GCN weights)"
    } else if name.ends_with(".slope") {
        "PReLU slopes"
    } else if name == "attention.w_sem" {
        "W_sem"
    } else if name == "attention.b" {
        "b"
    } else if name == "attention.q" {
        "q"
    } else if name.starts_with("disc_fine") {
        "W_psi (fine)"
    } else if name.starts_with("disc_coarse") {
        "W_phi (coarse)"
    } else {
        "W_task"
    }
}

/// Central-difference check of every tensor. Returns the largest
/// relative error per group, `|a - n| / max(|a|, |n|)`, where
/// entries with both magnitudes below 1e-7 count as exact.
pub fn gradient_errors(inst: &GradInstance, objective: Objective) -> Vec<(String, f64)> {
    let (_, analytic) = inst.evaluate(objective, &inst.params, &inst.task).unwrap();
    let mut names: Vec<String> = inst.params.named().into_iter().map(|(n, _)| n).collect();
    if objective != Objective::Hemi {
        names.push("task".into());
    }
    let mut worst: Vec<(String, f64)> = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = analytic[k].len();
        for i in 0..len {
            let value_at = |delta: f64| {
                let mut p = inst.params.clone();
                let mut t = inst.task.clone();
                if k < p.tensors().len() {
                    p.tensors_mut()[k].data_mut()[i] += delta;
                } else {
                    t.data_mut()[i] += delta;
                }
                inst.evaluate(objective, &p, &t).unwrap().0
            };
            let numeric = (value_at(FD_STEP) - value_at(-FD_STEP)) / (2.0 * FD_STEP);
            let a = analytic[k].data()[i];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-7 { 0.0 } else { (a - numeric).abs() / scale };
            let group = group_of(name).to_string();
            match worst.iter_mut().find(|(g, _)| *g == group) {
                Some((_, e)) => *e = e.max(err),
                None => worst.push((group, err)),
            }
        }
    }
    worst
}

// ---- composition oracle ----

/// Random schema with 2 to 4 node types (1 to 30 nodes each), 2 to 5
/// relations and random edge density. Type 0 is the target.
pub fn random_typed_graph(rng: &mut impl Rng) -> HeteroGraph {
    let mut b = HeteroGraphBuilder::new();
    let types: Vec<(NodeTypeId, usize)> = (0..rng.gen_range(2..=4))
        .map(|i| {
            let count = rng.gen_range(1..=30);
            (b.node_type(&format!("t{i}"), count), count)
        })
        .collect();
    let mut relations = vec![];
    for r in 0..rng.gen_range(2..=5) {
        // make the target reachable: the first relation starts at it
        let (s, sc) = if r == 0 { types[0] } else { types[rng.gen_range(0..types.len())] };
        let (d, dc) = types[rng.gen_range(0..types.len())];
        let rel = b.relation(&format!("r{r}"), s, d);
        let p = rng.gen_range(0.0..0.3);
        for u in 0..sc {
            for v in 0..dc {
                if rng.gen_bool(p) {
                    b.edge(rel, u, v);
                }
            }
        }
        relations.push(rel);
    }
    b.build(NodeTypeId(0)).unwrap()
}

/// Random valid meta-path of 1 to 4 hops from and to the target type, or
/// `None` when the walk gets stuck.
pub fn random_metapath(graph: &HeteroGraph, rng: &mut impl Rng) -> Option<MetaPathSpec> {
    let hops = rng.gen_range(1..=4);
    let target = graph.target_type();
    let mut at = target;
    let mut steps = Vec::new();
    for h in 0..hops {
        let last = h + 1 == hops;
        let options: Vec<Step> = (0..graph.relations().len())
            .flat_map(|r| {
                let rel = graph.relation(RelationId(r));
                let mut out = Vec::new();
                if rel.src == at && (!last || rel.dst == target) {
                    out.push(Step {
                        relation: RelationId(r),
                        reversed: false,
                    });
                }
                if rel.dst == at && (!last || rel.src == target) {
                    out.push(Step {
                        relation: RelationId(r),
                        reversed: true,
                    });
                }
                out
            })
            .collect();
        let step = *options.choose(rng)?;
        let rel = graph.relation(step.relation);
        at = if step.reversed { rel.src } else { rel.dst };
        steps.push(step);
    }
    Some(MetaPathSpec {
        name: "random".into(),
        steps,
    })
}

/// Enumerates every path instance by depth-first search and returns the
/// symmetrized endpoint relation as a dense matrix.
pub fn brute_force_compose(graph: &HeteroGraph, spec: &MetaPathSpec) -> Vec<Vec<bool>> {
    // out-neighbors of each hop, by scanning the raw edge lists
    let hops: Vec<Vec<Vec<usize>>> = spec
        .steps
        .iter()
        .map(|step| {
            let rel = graph.relation(step.relation);
            let from = if step.reversed { rel.dst } else { rel.src };
            let mut adj = vec![Vec::new(); graph.node_count(from)];
            for &(s, d) in graph.edges(step.relation) {
                if step.reversed {
                    adj[d].push(s);
                } else {
                    adj[s].push(d);
                }
            }
            adj
        })
        .collect();
    fn walk(hops: &[Vec<Vec<usize>>], at: usize, ends: &mut BTreeSet<usize>) {
        match hops.split_first() {
            None => {
                ends.insert(at);
            }
            Some((hop, rest)) => {
                for &next in &hop[at] {
                    walk(rest, next, ends);
                }
            }
        }
    }
    let n = graph.target_count();
    let mut dense = vec![vec![false; n]; n];
    for v in 0..n {
        let mut ends = BTreeSet::new();
        walk(&hops, v, &mut ends);
        for u in ends {
            dense[v][u] = true;
            dense[u][v] = true;
        }
    }
    dense
}
