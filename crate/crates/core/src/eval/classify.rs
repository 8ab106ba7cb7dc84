use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::metrics::{f1_scores, mean_std};
use crate::tensor::{AdamState, Tape, Tensor};
use crate::train::nc_loss;

/// Node split for probing, by fractions of the labeled nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.2,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

/// Disjoint index lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Shuffles `nodes` and cuts it by the fractions (floored counts).
    pub fn split(&self, nodes: &[usize]) -> Result<Split> {
        let fracs = [self.train, self.val, self.test];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || fracs.iter().sum::<f64>() > 1.0 + 1e-9
        {
            return Err(Error::InvalidArgument(format!(
                "split fractions {fracs:?} must lie in [0, 1] and sum to at most 1"
            )));
        }
        let mut order = nodes.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n = order.len() as f64;
        let count = |f: f64| (f * n + 1e-9).floor() as usize;
        let (a, b, c) = (count(self.train), count(self.val), count(self.test));
        Ok(Split {
            train: order[..a].to_vec(),
            val: order[a..a + b].to_vec(),
            test: order[a + b..a + b + c].to_vec(),
        })
    }
}

impl Split {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::InvalidArgument(format!("split index {i} outside {n} rows")));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidArgument(format!("node {i} in more than one split")));
            }
        }
        if self.train.is_empty() || self.test.is_empty() {
            return Err(Error::InvalidArgument("empty train or test split".into()));
        }
        Ok(())
    }
}

/// Logistic-regression probe settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 0.001,
            max_epochs: 1000,
            patience: 20,
            repeats: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub macro_std: f64,
    pub micro_std: f64,
}

fn predict(z: &Tensor, w: &Tensor, b: &Tensor, rows: &[usize]) -> Vec<usize> {
    rows.iter()
        .map(|&r| {
            let x = z.row(r);
            (0..w.cols())
                .map(|c| {
                    let s: f64 = x.iter().enumerate().map(|(k, v)| v * w.get(k, c)).sum();
                    s + b.data()[c]
                })
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap_or(0)
        })
        .collect()
}

/// Fits one multinomial logistic regression with Adam and returns test
/// predictions from the epoch with the best validation accuracy (ties broken
/// by lower validation loss).
fn fit_once(
    z: &Tensor,
    labels: &[usize],
    classes: usize,
    split: &Split,
    config: &ProbeConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Tensor::glorot(z.cols(), classes, &mut rng);
    let mut b = Tensor::zeros(&[classes]);
    let mut adam = AdamState::new(config.lr, &[&w, &b]);
    let train: Vec<(usize, usize)> = split.train.iter().map(|&v| (v, labels[v])).collect();
    let val: Vec<(usize, usize)> = split.val.iter().map(|&v| (v, labels[v])).collect();
    let z_train = z.select_rows(&split.train);
    let train_local: Vec<(usize, usize)> =
        train.iter().enumerate().map(|(i, &(_, c))| (i, c)).collect();

    let score = |w: &Tensor, b: &Tensor| -> Result<(f64, f64)> {
        if val.is_empty() {
            return Ok((0.0, 0.0));
        }
        let pred = predict(z, w, b, &split.val);
        let acc = pred
            .iter()
            .zip(&val)
            .filter(|(p, (_, t))| *p == t)
            .count() as f64
            / val.len() as f64;
        let tape = Tape::new();
        let local: Vec<(usize, usize)> = val.iter().enumerate().map(|(i, &(_, c))| (i, c)).collect();
        let logits = tape
            .constant(z.select_rows(&split.val))
            .matmul(tape.constant(w.clone()))?
            .bias_add(tape.constant(b.clone()))?;
        Ok((acc, nc_loss(&tape, logits, &local)?.item()))
    };

    let mut best = (score(&w, &b)?, w.clone(), b.clone());
    let mut wait = 0;
    for _ in 0..config.max_epochs {
        let tape = Tape::new();
        let (wv, bv) = (tape.var(w.clone()), tape.var(b.clone()));
        let logits = tape.constant(z_train.clone()).matmul(wv)?.bias_add(bv)?;
        let grads = nc_loss(&tape, logits, &train_local)?.backward()?;
        adam.step(&mut [&mut w, &mut b], &[grads.get(wv), grads.get(bv)])?;

        if val.is_empty() {
            best = ((0.0, 0.0), w.clone(), b.clone());
            continue;
        }
        let (acc, loss) = score(&w, &b)?;
        let ((best_acc, best_loss), _, _) = best;
        if acc > best_acc || (acc == best_acc && loss < best_loss) {
            best = ((acc, loss), w.clone(), b.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                break;
            }
        }
    }
    Ok(predict(z, &best.1, &best.2, &split.test))
}

/// Linear probe on frozen embeddings. Labels are dense class ids per row;
/// the probe is refit `repeats` times with different initializations and the
/// F1 scores on the test split are averaged.
pub fn probe_classify(
    z: &Tensor,
    labels: &[usize],
    split: &Split,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    if z.rank() != 2 || labels.len() != z.rows() {
        return Err(Error::shape("probe_classify", z.shape(), &[labels.len()]));
    }
    split.validate(z.rows())?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let train_classes: BTreeSet<usize> = split.train.iter().map(|&v| labels[v]).collect();
    let all_classes: BTreeSet<usize> = labels.iter().copied().collect();
    if let Some(missing) = all_classes.difference(&train_classes).next() {
        return Err(Error::InvalidArgument(format!(
            "class {missing} is absent from the training split"
        )));
    }
    let truth: Vec<usize> = split.test.iter().map(|&v| labels[v]).collect();
    let mut macros = Vec::new();
    let mut micros = Vec::new();
    for r in 0..config.repeats.max(1) {
        let seed = config.seed.wrapping_add(r as u64);
        let pred = fit_once(z, labels, classes, split, config, seed)?;
        let (ma, mi) = f1_scores(&truth, &pred)?;
        macros.push(ma);
        micros.push(mi);
    }
    let (macro_f1, macro_std) = mean_std(&macros);
    let (micro_f1, micro_std) = mean_std(&micros);
    Ok(ProbeResult {
        macro_f1,
        micro_f1,
        macro_std,
        micro_std,
    })
}
