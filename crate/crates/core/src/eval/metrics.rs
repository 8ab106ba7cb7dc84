//! Classification, clustering and ranking metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};

/// Macro- and micro-averaged F1 over the classes present in either the
/// truth or the predictions. Returns `(macro, micro)`.
pub fn f1_scores(truth: &[usize], pred: &[usize]) -> Result<(f64, f64)> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "f1 needs equal non-empty label lists, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let classes: BTreeSet<usize> = truth.iter().chain(pred).copied().collect();
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    let mut macro_sum = 0.0;
    for &c in &classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fneg = 0;
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        macro_sum += if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
    }
    let micro = 2.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64;
    Ok((macro_sum / classes.len() as f64, micro))
}

fn contingency(a: &[usize], b: &[usize]) -> (HashMap<(usize, usize), usize>, BTreeMap<usize, usize>, BTreeMap<usize, usize>) {
    let mut joint = HashMap::new();
    let mut ca = BTreeMap::new();
    let mut cb = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0) += 1;
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
    }
    (joint, ca, cb)
}

fn entropy(counts: &BTreeMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn check_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "clusterings must be equal-length and non-empty, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Normalized mutual information, normalized by the arithmetic mean of the
/// two entropies. Two single-cluster labelings score 1.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_pair(truth, pred)?;
    let n = truth.len() as f64;
    let (joint, ca, cb) = contingency(truth, pred);
    let (ha, hb) = (entropy(&ca, n), entropy(&cb, n));
    if ca.len() == 1 && cb.len() == 1 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c as f64 / n;
        let px = ca[&x] as f64 / n;
        let py = cb[&y] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    let denom = (ha + hb) / 2.0;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Identical trivial partitions score 1.
pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_pair(truth, pred)?;
    let (joint, ca, cb) = contingency(truth, pred);
    let index: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sum_a: f64 = ca.values().map(|&c| comb2(c)).sum();
    let sum_b: f64 = cb.values().map(|&c| comb2(c)).sum();
    let total = comb2(truth.len());
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidArgument(
            "ranking metrics need positive and negative scores".into(),
        ));
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    Ok(())
}

/// ROC AUC from the rank-sum statistic; tied scores share their mid-rank.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks are 1-based: positions i..=j share (i + j) / 2 + 1
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Average precision: `Σ (R_k - R_{k-1}) P_k` over descending score
/// thresholds, with tied scores entering together.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let np = pos.len() as f64;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        tp += all[i..=j].iter().filter(|x| x.1).count();
        seen += j - i + 1;
        let recall = tp as f64 / np;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Median (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_separable_and_constant_predictions() {
        assert_eq!(f1_scores(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), (1.0, 1.0));
        let (macro_f1, micro) = f1_scores(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert!((micro - 0.5).abs() < 1e-15);
        // class 0: P = 1/2, R = 1, F1 = 2/3; class 1: F1 = 0
        assert!((macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn clustering_metric_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn ari_against_hand_value() {
        // contingency [[2,1],[0,3]]: index 1+3 = 4, rows 3+3 = 6, cols 1+6 = 7,
        // expected 6*7/15 = 2.8, max 6.5, ARI = 1.2/3.7
        let t = [0, 0, 0, 1, 1, 1];
        let p = [0, 0, 1, 1, 1, 1];
        assert!((ari(&t, &p).unwrap() - 1.2 / 3.7).abs() < 1e-12);
    }

    #[test]
    fn nmi_against_hand_value() {
        // same partition pair; MI and entropies computed by hand
        let t = [0, 0, 0, 1, 1, 1];
        let p = [0, 0, 1, 1, 1, 1];
        let ln = f64::ln;
        let mi = (2.0 / 6.0) * ln((2.0 / 6.0) / (0.5 * 2.0 / 6.0))
            + (1.0 / 6.0) * ln((1.0 / 6.0) / (0.5 * 4.0 / 6.0))
            + (3.0 / 6.0) * ln((3.0 / 6.0) / (0.5 * 4.0 / 6.0));
        let ht = ln(2.0);
        let hp = -(1.0 / 3.0) * ln(1.0 / 3.0) - (2.0 / 3.0) * ln(2.0 / 3.0);
        assert!((nmi(&t, &p).unwrap() - mi / ((ht + hp) / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.3, 0.1]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.9, 0.8], &[0.3, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.85, 0.1]).unwrap(), 0.75);
        // thresholds 0.9 (P=1, R=.5), 0.85 (R unchanged), 0.8 (P=2/3, R=1)
        let ap = average_precision(&[0.9, 0.8], &[0.85, 0.1]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert!(roc_auc(&[], &[0.1]).is_err());
        assert!(average_precision(&[0.1], &[]).is_err());
    }

    fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for &p in pos {
            for &n in neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    proptest! {
        #[test]
        fn rank_auc_matches_pairwise(
            pos in proptest::collection::vec(0u8..20, 1..100),
            neg in proptest::collection::vec(0u8..20, 1..100),
        ) {
            // coarse integer scores force plenty of ties
            let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
            let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
            let auc = roc_auc(&pos, &neg).unwrap();
            prop_assert!((auc - brute_auc(&pos, &neg)).abs() < 1e-12);
        }

        #[test]
        fn micro_f1_is_accuracy(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let acc = t.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
            let (_, micro) = f1_scores(&t, &p).unwrap();
            prop_assert!((micro - acc).abs() < 1e-12);
        }

        #[test]
        fn clustering_metrics_ignore_label_names(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 2..60),
            shift in 1usize..4,
        ) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let renamed: Vec<usize> = p.iter().map(|x| (x + shift) % 4 + 10).collect();
            prop_assert!((nmi(&t, &p).unwrap() - nmi(&t, &renamed).unwrap()).abs() < 1e-12);
            prop_assert!((ari(&t, &p).unwrap() - ari(&t, &renamed).unwrap()).abs() < 1e-12);
        }
    }
}
