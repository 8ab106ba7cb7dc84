use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::MetaPathGraph;
use crate::tensor::{sigmoid, SparseMatrix, Tape, Tensor, Var};

use super::params::{EncoderVars, ParamVars};

/// `D^{-1/2} (A + I) D^{-1/2}`, degrees taken from `A + I`.
pub fn gcn_normalize(adjacency: &MetaPathGraph) -> SparseMatrix {
    let n = adjacency.node_count();
    let rows: Vec<Vec<usize>> = (0..n)
        .map(|v| adjacency.neighbors(v).expect("v < n"))
        .collect();
    let inv_sqrt: Vec<f64> = rows.iter().map(|r| 1.0 / (r.len() as f64).sqrt()).collect();
    let triplets = rows
        .iter()
        .enumerate()
        .flat_map(|(v, r)| {
            let inv_sqrt = &inv_sqrt;
            r.iter().map(move |&u| (v, u, inv_sqrt[v] * inv_sqrt[u]))
        })
        .collect();
    SparseMatrix::from_triplets(n, n, triplets).expect("neighbor lists are sorted and unique")
}

/// GCN propagation `PReLU(Â H W)` for each layer of one encoder.
pub fn encode_metapath<'t>(
    tape: &'t Tape,
    norm_adj: &Arc<SparseMatrix>,
    x: Var<'t>,
    encoder: &EncoderVars<'t>,
) -> Result<Var<'t>> {
    let mut h = x;
    for &w in &encoder.weights {
        let xw = h.matmul(w)?;
        h = tape.spmm(norm_adj, xw)?.prelu(encoder.slope)?;
    }
    Ok(h)
}

/// Readout `σ(mean over rows)`.
pub fn summary(z: Var<'_>) -> Result<Var<'_>> {
    Ok(z.mean_rows()?.sigmoid())
}

/// Attention scores `e_j = qᵀ(W_sem · mean_v z_v + b)`, which equals the
/// node average of `qᵀ(W_sem z_v + b)`.
pub fn attention_scores<'t>(
    tape: &'t Tape,
    views: &[Var<'t>],
    w_sem: Var<'t>,
    b_sem: Var<'t>,
    q: Var<'t>,
) -> Result<Var<'t>> {
    let scores = views
        .iter()
        .map(|z| w_sem.matvec(z.mean_rows()?)?.add(b_sem)?.dot(q))
        .collect::<Result<Vec<_>>>()?;
    tape.stack(&scores)
}

/// Softmax attention over meta-path views and the weighted sum of the views.
/// Returns `(β, Z)`.
pub fn fuse<'t>(
    tape: &'t Tape,
    views: &[Var<'t>],
    w_sem: Var<'t>,
    b_sem: Var<'t>,
    q: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("fuse needs at least one view".into()));
    }
    let shape = views[0].shape();
    if let Some(v) = views.iter().find(|v| v.shape() != shape) {
        return Err(Error::shape("fuse", &shape, &v.shape()));
    }
    let beta = attention_scores(tape, views, w_sem, b_sem, q)?.softmax()?;
    let mut fused: Option<Var<'t>> = None;
    for (j, z) in views.iter().enumerate() {
        let term = z.scale_by(beta.index(j)?)?;
        fused = Some(match fused {
            None => term,
            Some(acc) => acc.add(term)?,
        });
    }
    Ok((beta, fused.expect("at least one view")))
}

/// Uniformly random row permutation of `x`. Returns the shuffled matrix and
/// the permutation (`out[i] = x[perm[i]]`).
pub fn corrupt<R: Rng + ?Sized>(x: &Tensor, rng: &mut R) -> (Tensor, Vec<usize>) {
    let mut perm: Vec<usize> = (0..x.rows()).collect();
    perm.shuffle(rng);
    (x.select_rows(&perm), perm)
}

/// Bilinear logits `z_jᵥ W z_v` for every row pair.
pub fn fine_logits<'t>(view: Var<'t>, fused: Var<'t>, w: Var<'t>) -> Result<Var<'t>> {
    view.matmul(w)?.mul(fused)?.row_sum()
}

/// Bilinear logits `s W z_v` for every row of `fused`.
pub fn coarse_logits<'t>(summary: Var<'t>, fused: Var<'t>, w: Var<'t>) -> Result<Var<'t>> {
    let u = w.transpose()?.matvec(summary)?;
    fused.matvec(u)
}

fn bilinear(a: &[f64], w: &Tensor, b: &[f64]) -> Result<f64> {
    if w.rank() != 2 || w.rows() != a.len() || w.cols() != b.len() {
        return Err(Error::shape("bilinear", &[a.len(), b.len()], w.shape()));
    }
    let mut total = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        total += ai * w.row(i).iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    }
    Ok(total)
}

/// Fine-grain discriminator probability `σ(z_jᵥ W_ψ z_v)`.
pub fn disc_fine(view_row: &[f64], fused_row: &[f64], w: &Tensor) -> Result<f64> {
    bilinear(view_row, w, fused_row).map(sigmoid)
}

/// Coarse-grain discriminator probability `σ(s_j W_φ z_v)`.
pub fn disc_coarse(summary: &[f64], fused_row: &[f64], w: &Tensor) -> Result<f64> {
    bilinear(summary, w, fused_row).map(sigmoid)
}

/// Outputs of one forward pass over all meta-paths.
#[derive(Clone, Debug)]
pub struct ForwardPass<'t> {
    pub views: Vec<Var<'t>>,
    pub beta: Var<'t>,
    pub fused: Var<'t>,
}

/// Encoders then attention fusion.
pub fn forward<'t>(
    tape: &'t Tape,
    params: &ParamVars<'t>,
    adjs: &[Arc<SparseMatrix>],
    x: Var<'t>,
) -> Result<ForwardPass<'t>> {
    let views = adjs
        .iter()
        .enumerate()
        .map(|(j, a)| encode_metapath(tape, a, x, params.encoder(j)))
        .collect::<Result<Vec<_>>>()?;
    let (beta, fused) = fuse(tape, &views, params.w_sem, params.b_sem, params.q)?;
    Ok(ForwardPass { views, beta, fused })
}

/// Forward pass where each meta-path sees its own input matrix.
pub fn forward_per_view<'t>(
    tape: &'t Tape,
    params: &ParamVars<'t>,
    adjs: &[Arc<SparseMatrix>],
    xs: &[Var<'t>],
) -> Result<ForwardPass<'t>> {
    let views = adjs
        .iter()
        .zip(xs)
        .enumerate()
        .map(|(j, (a, &x))| encode_metapath(tape, a, x, params.encoder(j)))
        .collect::<Result<Vec<_>>>()?;
    let (beta, fused) = fuse(tape, &views, params.w_sem, params.b_sem, params.q)?;
    Ok(ForwardPass { views, beta, fused })
}

/// Mean binary cross-entropy of positive and negative logits:
/// `-mean log σ(pos) - mean log σ(-neg)`.
pub fn bce_pair<'t>(pos: Var<'t>, neg: Var<'t>) -> Var<'t> {
    let p = pos.log_sigmoid().mean();
    let n = neg.neg().log_sigmoid().mean();
    p.add(n).expect("scalars").neg()
}

/// `λ·L_f + (1-λ)·L_c`, each term averaged over meta-paths and nodes.
///
/// Summaries come from the clean views only. Positives pair a view with the
/// clean fused rows, negatives with the corrupted fused rows.
pub fn hemi_loss<'t>(
    tape: &'t Tape,
    clean: &ForwardPass<'t>,
    corrupted_fused: Var<'t>,
    params: &ParamVars<'t>,
    lambda: f64,
) -> Result<Var<'t>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if corrupted_fused.shape() != clean.fused.shape() {
        return Err(Error::shape(
            "hemi_loss",
            &clean.fused.shape(),
            &corrupted_fused.shape(),
        ));
    }
    let m = clean.views.len() as f64;
    let mut fine = Vec::with_capacity(clean.views.len());
    let mut coarse = Vec::with_capacity(clean.views.len());
    for (j, &view) in clean.views.iter().enumerate() {
        let vw = view.matmul(params.disc_fine(j))?;
        let pos = vw.mul(clean.fused)?.row_sum()?;
        let neg = vw.mul(corrupted_fused)?.row_sum()?;
        fine.push(bce_pair(pos, neg));

        let s = summary(view)?;
        let w = params.disc_coarse(j);
        let pos = coarse_logits(s, clean.fused, w)?;
        let neg = coarse_logits(s, corrupted_fused, w)?;
        coarse.push(bce_pair(pos, neg));
    }
    let l_f = tape.stack(&fine)?.sum().scale(1.0 / m);
    let l_c = tape.stack(&coarse)?.sum().scale(1.0 / m);
    l_f.scale(lambda).add(l_c.scale(1.0 - lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetaPathSpec;

    fn spec() -> MetaPathSpec {
        MetaPathSpec {
            name: "t".into(),
            steps: Vec::new(),
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn normalize_empty_graph_is_identity() {
        let g = MetaPathGraph::from_pairs(spec(), 2, []).unwrap();
        assert_eq!(gcn_normalize(&g).to_dense(), Tensor::identity(2));
    }

    #[test]
    fn normalize_single_edge() {
        let g = MetaPathGraph::from_pairs(spec(), 2, [(0, 1)]).unwrap();
        let a = gcn_normalize(&g).to_dense();
        assert!(a.data().iter().all(|&v| close(v, 0.5)));
    }

    #[test]
    fn normalize_triangle() {
        let g = MetaPathGraph::from_pairs(spec(), 3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let a = gcn_normalize(&g).to_dense();
        assert!(a.data().iter().all(|&v| close(v, 1.0 / 3.0)));
    }

    #[test]
    fn normalize_keeps_existing_diagonal_single() {
        let g = MetaPathGraph::from_pairs(spec(), 2, [(0, 0), (1, 1), (0, 1)]).unwrap();
        let a = gcn_normalize(&g).to_dense();
        assert!(a.data().iter().all(|&v| close(v, 0.5)));
    }

    fn encoder_on<'t>(tape: &'t Tape, w: Tensor) -> EncoderVars<'t> {
        EncoderVars {
            weights: vec![tape.var(w)],
            slope: tape.var(Tensor::scalar(0.25)),
        }
    }

    #[test]
    fn encode_with_identity_adjacency_passes_nonnegative_input() {
        let tape = Tape::new();
        let x = Tensor::from_rows(&[[1.0, 0.5], [0.0, 2.0], [3.0, 0.0]]).unwrap();
        let xv = tape.constant(x.clone());
        let enc = encoder_on(&tape, Tensor::identity(2));
        let z = encode_metapath(&tape, &Arc::new(SparseMatrix::identity(3)), xv, &enc).unwrap();
        assert_eq!(*z.value(), x);
    }

    #[test]
    fn encode_zero_input_is_zero() {
        let tape = Tape::new();
        let xv = tape.constant(Tensor::zeros(&[3, 2]));
        let enc = encoder_on(&tape, Tensor::filled(&[2, 4], 0.7));
        let z = encode_metapath(&tape, &Arc::new(SparseMatrix::identity(3)), xv, &enc).unwrap();
        assert_eq!(*z.value(), Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn encode_two_node_path() {
        let tape = Tape::new();
        let g = MetaPathGraph::from_pairs(spec(), 2, [(0, 1)]).unwrap();
        let adj = Arc::new(gcn_normalize(&g));
        let xv = tape.constant(Tensor::identity(2));
        let enc = encoder_on(&tape, Tensor::identity(2));
        let z = encode_metapath(&tape, &adj, xv, &enc).unwrap();
        assert!(z.value().data().iter().all(|&v| close(v, 0.5)));
    }

    #[test]
    fn encode_shape_mismatch() {
        let tape = Tape::new();
        let xv = tape.constant(Tensor::zeros(&[3, 2]));
        let enc = encoder_on(&tape, Tensor::zeros(&[3, 4]));
        let adj = Arc::new(SparseMatrix::identity(3));
        assert!(encode_metapath(&tape, &adj, xv, &enc).is_err());
    }

    #[test]
    fn summary_examples() {
        let tape = Tape::new();
        let s = summary(tape.constant(Tensor::zeros(&[4, 3]))).unwrap();
        assert!(s.value().data().iter().all(|&v| v == 0.5));

        let s = summary(tape.constant(Tensor::from_rows(&[[2.0, -1.0], [-2.0, 1.0]]).unwrap()))
            .unwrap();
        assert!(s.value().data().iter().all(|&v| v == 0.5));

        let s = summary(tape.constant(Tensor::filled(&[1, 3], 1.0))).unwrap();
        for &v in s.value().data() {
            assert!((v - 0.731_058_578_630_004_9).abs() < 1e-12);
        }
    }

    fn attention_vars(tape: &Tape, d: usize) -> (Var<'_>, Var<'_>, Var<'_>) {
        (
            tape.var(Tensor::filled(&[2, d], 0.3)),
            tape.var(Tensor::vector(vec![0.1, -0.2])),
            tape.var(Tensor::vector(vec![1.0, 0.5])),
        )
    }

    #[test]
    fn fuse_single_view() {
        let tape = Tape::new();
        let z = tape.var(Tensor::from_rows(&[[1.0, -2.0], [0.5, 0.0]]).unwrap());
        let (w, b, q) = attention_vars(&tape, 2);
        let (beta, fused) = fuse(&tape, &[z], w, b, q).unwrap();
        assert_eq!(beta.value().data(), &[1.0]);
        assert_eq!(*fused.value(), *z.value());
    }

    #[test]
    fn fuse_identical_views() {
        let tape = Tape::new();
        let t = Tensor::from_rows(&[[1.0, -2.0], [0.5, 0.0]]).unwrap();
        let (z1, z2) = (tape.var(t.clone()), tape.var(t.clone()));
        let (w, b, q) = attention_vars(&tape, 2);
        let (beta, fused) = fuse(&tape, &[z1, z2], w, b, q).unwrap();
        assert_eq!(beta.value().data(), &[0.5, 0.5]);
        assert_eq!(*fused.value(), t);
    }

    #[test]
    fn fuse_contrived_scores() {
        // W_sem = [[1, 0]], b = 0, q = [1]: e_j is the mean of column 0.
        let tape = Tape::new();
        let ln2 = 2f64.ln();
        let z1 = tape.var(Tensor::from_rows(&[[ln2 - 1.0, 5.0], [ln2 + 1.0, -3.0]]).unwrap());
        let z2 = tape.var(Tensor::from_rows(&[[0.5, 1.0], [-0.5, 2.0]]).unwrap());
        let w = tape.var(Tensor::from_rows(&[[1.0, 0.0]]).unwrap());
        let b = tape.var(Tensor::vector(vec![0.0]));
        let q = tape.var(Tensor::vector(vec![1.0]));
        let e = attention_scores(&tape, &[z1, z2], w, b, q).unwrap();
        assert!(close(e.value().data()[0], ln2));
        assert!(close(e.value().data()[1], 0.0));
        let (beta, _) = fuse(&tape, &[z1, z2], w, b, q).unwrap();
        assert!(close(beta.value().data()[0], 2.0 / 3.0));
        assert!(close(beta.value().data()[1], 1.0 / 3.0));
    }

    #[test]
    fn fuse_rejects_mismatched_views() {
        let tape = Tape::new();
        let z1 = tape.var(Tensor::zeros(&[2, 2]));
        let z2 = tape.var(Tensor::zeros(&[3, 2]));
        let (w, b, q) = attention_vars(&tape, 2);
        assert!(fuse(&tape, &[z1, z2], w, b, q).is_err());
    }

    #[test]
    fn corruption_preserves_rows() {
        use rand::SeedableRng;
        let x = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (y, perm) = corrupt(&x, &mut rng);
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(y.row(i), x.row(p));
        }
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert_eq!(corrupt(&x, &mut rng).0, y);
    }

    #[test]
    fn discriminator_examples() {
        let eye = Tensor::identity(3);
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let zero = [0.0; 3];
        for disc in [disc_fine, disc_coarse] {
            assert_eq!(disc(&zero, &e1, &eye).unwrap(), 0.5);
            assert_eq!(disc(&e1, &zero, &eye).unwrap(), 0.5);
            assert!((disc(&e1, &e1, &eye).unwrap() - 0.731_058_578_630_004_9).abs() < 1e-12);
            assert_eq!(disc(&e1, &e2, &eye).unwrap(), 0.5);
            assert!(disc(&e1, &e2, &Tensor::identity(2)).is_err());
        }
    }

    #[test]
    fn tape_logits_agree_with_scalar_discriminators() {
        let tape = Tape::new();
        let view = Tensor::from_rows(&[[0.2, -0.4], [1.0, 0.3]]).unwrap();
        let fused = Tensor::from_rows(&[[0.5, 0.1], [-0.7, 0.9]]).unwrap();
        let w = Tensor::from_rows(&[[0.3, -1.0], [0.8, 0.2]]).unwrap();
        let (vv, fv, wv) = (
            tape.var(view.clone()),
            tape.var(fused.clone()),
            tape.var(w.clone()),
        );
        let logits = fine_logits(vv, fv, wv).unwrap();
        let s = summary(vv).unwrap();
        let coarse = coarse_logits(s, fv, wv).unwrap();
        for r in 0..2 {
            let p = disc_fine(view.row(r), fused.row(r), &w).unwrap();
            assert!((sigmoid(logits.value().data()[r]) - p).abs() < 1e-15);
            let p = disc_coarse(s.value().data(), fused.row(r), &w).unwrap();
            assert!((sigmoid(coarse.value().data()[r]) - p).abs() < 1e-15);
        }
    }
}
