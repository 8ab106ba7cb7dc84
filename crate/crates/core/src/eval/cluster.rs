use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::metrics::{ari, mean_std, nmi};
use crate::tensor::Tensor;

const MAX_ITER: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init<R: Rng + ?Sized>(z: &Tensor, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = z.rows();
    let mut centers = vec![z.row(rng.gen_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(z.row(i), &centers[0])).collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a center
            Err(_) => rng.gen_range(0..n),
        };
        centers.push(z.row(next).to_vec());
        let c = centers.last().expect("just pushed");
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), c));
        }
    }
    centers
}

/// Lloyd's k-means with k-means++ seeding. Returns one cluster id per row.
pub fn kmeans<R: Rng + ?Sized>(z: &Tensor, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = z.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let d = z.cols();
    let mut centers = plus_plus_init(z, k, rng);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (c, sq_dist(z.row(i), &centers[c])))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(c, _)| c)
                .expect("k >= 1");
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .max_by(|&x, &y| {
                        sq_dist(z.row(x), &centers[assign[x]])
                            .total_cmp(&sq_dist(z.row(y), &centers[assign[y]]))
                    })
                    .expect("n >= 1");
                centers[c] = z.row(far).to_vec();
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(assign)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub nmi: f64,
    pub ari: f64,
    pub nmi_std: f64,
    pub ari_std: f64,
}

/// Runs k-means `runs` times from different seeds and averages NMI and ARI
/// against `labels`.
pub fn cluster_eval(
    z: &Tensor,
    labels: &[usize],
    k: usize,
    runs: usize,
    seed: u64,
) -> Result<ClusterResult> {
    if labels.len() != z.rows() {
        return Err(Error::shape("cluster_eval", z.shape(), &[labels.len()]));
    }
    if k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    let mut nmis = Vec::new();
    let mut aris = Vec::new();
    for r in 0..runs.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let pred = kmeans(z, k, &mut rng)?;
        nmis.push(nmi(labels, &pred)?);
        aris.push(ari(labels, &pred)?);
    }
    let (nmi, nmi_std) = mean_std(&nmis);
    let (ari, ari_std) = mean_std(&aris);
    Ok(ClusterResult {
        nmi,
        ari,
        nmi_std,
        ari_std,
    })
}
