use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::metrics::{average_precision, mean_std, roc_auc};
use crate::graph::MetaPathGraph;
use crate::tensor::{sigmoid, Tensor};

/// Held-out fractions of each meta-path's undirected edge set.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskFractions {
    pub test: f64,
    pub val: f64,
}

impl Default for MaskFractions {
    fn default() -> Self {
        MaskFractions {
            test: 0.45,
            val: 0.05,
        }
    }
}

/// Held-out positives, equally many sampled non-edges, and the residual
/// training graph of one meta-path.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPathMask {
    pub name: String,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub residual: MetaPathGraph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMask {
    pub metapaths: Vec<MetaPathMask>,
}

impl EdgeMask {
    pub fn residual_graphs(&self) -> Vec<MetaPathGraph> {
        self.metapaths.iter().map(|m| m.residual.clone()).collect()
    }

    /// Union of residual off-diagonal edges over all meta-paths.
    pub fn training_edges(&self) -> Vec<(usize, usize)> {
        let mut all: Vec<(usize, usize)> = self
            .metapaths
            .iter()
            .flat_map(|m| m.residual.undirected_edges())
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Held-out counts for `edges` undirected edges: `(test, val)`, validation
/// floored and the rest of the rounded held-out total going to test.
pub fn mask_counts(edges: usize, fractions: &MaskFractions) -> (usize, usize) {
    let e = edges as f64;
    let held = ((fractions.test + fractions.val) * e + 1e-9).round() as usize;
    let val = ((fractions.val * e) + 1e-9).floor() as usize;
    (held.saturating_sub(val), val.min(held))
}

fn sample_non_edges<R: Rng + ?Sized>(
    g: &MetaPathGraph,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = g.node_count();
    let total = n * n.saturating_sub(1) / 2;
    let edges = g.undirected_edges().len();
    let free = total - edges;
    if free < count {
        return Err(Error::InvalidArgument(format!(
            "meta-path `{}` has {free} non-edges, {count} negatives needed",
            g.metapath.name
        )));
    }
    if free <= 4 * count {
        let mut pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !g.contains(u, v))
            .collect();
        pool.shuffle(rng);
        pool.truncate(count);
        return Ok(pool);
    }
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let p = (u.min(v), u.max(v));
        if g.contains(p.0, p.1) || !chosen.insert(p) {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

/// Splits every meta-path's undirected edges into held-out test/validation
/// positives and a residual graph, and samples as many non-edges (without
/// replacement) as negatives.
pub fn mask_edges(graphs: &[MetaPathGraph], fractions: &MaskFractions, seed: u64) -> Result<EdgeMask> {
    if fractions.test < 0.0 || fractions.val < 0.0 || fractions.test + fractions.val > 1.0 {
        return Err(Error::InvalidArgument(format!("bad mask fractions {fractions:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(graphs.len());
    for g in graphs {
        let mut edges = g.undirected_edges();
        if edges.len() < 20 {
            return Err(Error::InvalidArgument(format!(
                "meta-path `{}` has {} edges; masking needs at least 20",
                g.metapath.name,
                edges.len()
            )));
        }
        let (n_test, n_val) = mask_counts(edges.len(), fractions);
        edges.shuffle(&mut rng);
        let mut test_pos = edges[..n_test].to_vec();
        let mut val_pos = edges[n_test..n_test + n_val].to_vec();
        let mut kept = edges[n_test + n_val..].to_vec();
        test_pos.sort_unstable();
        val_pos.sort_unstable();
        kept.sort_unstable();

        let negatives = sample_non_edges(g, n_test + n_val, &mut rng)?;
        let test_neg = negatives[..n_test].to_vec();
        let val_neg = negatives[n_test..].to_vec();

        let diagonal = (0..g.node_count()).filter(|&v| g.contains(v, v)).map(|v| (v, v));
        let residual =
            MetaPathGraph::from_pairs(g.metapath.clone(), g.node_count(), kept.into_iter().chain(diagonal))?;
        out.push(MetaPathMask {
            name: g.metapath.name.clone(),
            test_pos,
            test_neg,
            val_pos,
            val_neg,
            residual,
        });
    }
    Ok(EdgeMask { metapaths: out })
}

/// `σ(z_uᵀ z_v)` for each pair.
pub fn link_scores(z: &Tensor, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(u, v)| {
            if u >= z.rows() || v >= z.rows() {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {v}) outside {} rows",
                    z.rows()
                )));
            }
            Ok(sigmoid(z.row(u).iter().zip(z.row(v)).map(|(a, b)| a * b).sum()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkScore {
    pub name: String,
    pub auc: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkResult {
    pub per_metapath: Vec<LinkScore>,
    pub mean_auc: f64,
    pub mean_ap: f64,
    pub auc_std: f64,
    pub ap_std: f64,
}

/// Test-split AUC and AP of one embedding matrix against every meta-path's
/// held-out pairs, plus their macro averages.
pub fn link_eval(z: &Tensor, mask: &EdgeMask) -> Result<LinkResult> {
    let per_metapath = mask
        .metapaths
        .iter()
        .map(|m| {
            let pos = link_scores(z, &m.test_pos)?;
            let neg = link_scores(z, &m.test_neg)?;
            Ok(LinkScore {
                name: m.name.clone(),
                auc: roc_auc(&pos, &neg)?,
                ap: average_precision(&pos, &neg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aucs: Vec<f64> = per_metapath.iter().map(|s| s.auc).collect();
    let aps: Vec<f64> = per_metapath.iter().map(|s| s.ap).collect();
    let (mean_auc, auc_std) = mean_std(&aucs);
    let (mean_ap, ap_std) = mean_std(&aps);
    Ok(LinkResult {
        per_metapath,
        mean_auc,
        mean_ap,
        auc_std,
        ap_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetaPathSpec;

    fn spec() -> MetaPathSpec {
        MetaPathSpec {
            name: "m".into(),
            steps: Vec::new(),
        }
    }

    /// 100 edges: a 15-node clique has 105, drop five.
    fn hundred_edges() -> MetaPathGraph {
        let pairs: Vec<_> = (0..15)
            .flat_map(|u| (u + 1..15).map(move |v| (u, v)))
            .skip(5)
            .collect();
        MetaPathGraph::from_pairs(spec(), 40, pairs).unwrap()
    }

    #[test]
    fn counts_for_hundred_edges() {
        assert_eq!(mask_counts(100, &MaskFractions::default()), (45, 5));
        assert_eq!(mask_counts(21, &MaskFractions::default()), (10, 1));
    }

    #[test]
    fn mask_partitions_edges() {
        let g = hundred_edges();
        let mask = mask_edges(&[g.clone()], &MaskFractions::default(), 3).unwrap();
        let m = &mask.metapaths[0];
        assert_eq!((m.test_pos.len(), m.val_pos.len()), (45, 5));
        assert_eq!((m.test_neg.len(), m.val_neg.len()), (45, 5));

        let residual: HashSet<_> = m.residual.undirected_edges().into_iter().collect();
        let held: HashSet<_> = m.test_pos.iter().chain(&m.val_pos).copied().collect();
        assert!(residual.is_disjoint(&held));
        let union: HashSet<_> = residual.union(&held).copied().collect();
        let original: HashSet<_> = g.undirected_edges().into_iter().collect();
        assert_eq!(union, original);

        for &(u, v) in m.test_neg.iter().chain(&m.val_neg) {
            assert!(u != v && !g.contains(u, v));
        }
        let negs: HashSet<_> = m.test_neg.iter().chain(&m.val_neg).collect();
        assert_eq!(negs.len(), 50);
    }

    #[test]
    fn mask_is_deterministic() {
        let g = hundred_edges();
        let a = mask_edges(&[g.clone()], &MaskFractions::default(), 8).unwrap();
        let b = mask_edges(&[g], &MaskFractions::default(), 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_edges_or_non_edges() {
        let small = MetaPathGraph::from_pairs(spec(), 10, (0..9).map(|i| (i, i + 1))).unwrap();
        assert!(mask_edges(&[small], &MaskFractions::default(), 0).is_err());

        let clique: Vec<_> = (0..8).flat_map(|u| (u + 1..8).map(move |v| (u, v))).collect();
        let dense = MetaPathGraph::from_pairs(spec(), 8, clique).unwrap();
        assert!(mask_edges(&[dense], &MaskFractions::default(), 0).is_err());
    }

    #[test]
    fn perfect_embedding_scores_one() {
        // two orthogonal groups: within-group dot products are large
        let z = Tensor::from_rows(&[[3.0, 0.0], [3.0, 0.0], [0.0, 3.0], [0.0, 3.0]]).unwrap();
        let g = MetaPathGraph::from_pairs(spec(), 4, [(0, 1), (2, 3)]).unwrap();
        let mask = EdgeMask {
            metapaths: vec![MetaPathMask {
                name: "m".into(),
                test_pos: vec![(0, 1), (2, 3)],
                test_neg: vec![(0, 2), (1, 3)],
                val_pos: vec![],
                val_neg: vec![],
                residual: g,
            }],
        };
        let r = link_eval(&z, &mask).unwrap();
        assert_eq!((r.mean_auc, r.mean_ap), (1.0, 1.0));
    }
}
