//! Resampling statistics for AUC: percentile confidence intervals and a
//! paired two-sided test for the difference of two scorers' AUCs.
//!
//! Resamples are stratified (positives drawn from positives, negatives from
//! negatives) so every resample contains both classes. Each resample draws
//! from its own derived seed, so the aggregate is independent of how the work
//! is split across threads.

use rand::Rng;
use rayon::prelude::*;

use super::roc::{auc, class_counts};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Stream};

fn split_classes(labels: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let pos = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    (pos, neg)
}

fn resample(pos: &[usize], neg: &[usize], seed: u64, b: u64) -> Vec<usize> {
    let mut rng = rng_for(seed, Stream::Bootstrap, b);
    let mut idx = Vec::with_capacity(pos.len() + neg.len());
    idx.extend((0..pos.len()).map(|_| pos[rng.gen_range(0..pos.len())]));
    idx.extend((0..neg.len()).map(|_| neg[rng.gen_range(0..neg.len())]));
    idx
}

/// Linear-interpolated quantile of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the AUC.
pub fn bootstrap_ci(
    scores: &[f64],
    labels: &[u8],
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    class_counts(scores, labels)?;
    if n_boot == 0 || !(0.0..1.0).contains(&level) || level == 0.0 {
        return Err(Error::invalid("bootstrap needs n_boot > 0 and level in (0, 1)"));
    }
    let (pos, neg) = split_classes(labels);
    let mut aucs: Vec<f64> = (0..n_boot as u64)
        .into_par_iter()
        .map(|b| {
            let idx = resample(&pos, &neg, seed, b);
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            auc(&s, &l).expect("stratified resample has both classes")
        })
        .collect();
    aucs.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Ok((
        quantile_sorted(&aucs, alpha / 2.0),
        quantile_sorted(&aucs, 1.0 - alpha / 2.0),
    ))
}

/// Two-sided p-value for `AUC(a) != AUC(b)` on the same samples: twice the
/// smaller fraction of paired-resample differences on either side of zero,
/// clipped to `[0, 1]`.
pub fn paired_auc_test(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[u8],
    n_resamples: usize,
    seed: u64,
) -> Result<f64> {
    class_counts(scores_a, labels)?;
    class_counts(scores_b, labels)?;
    if n_resamples == 0 {
        return Err(Error::invalid("paired test needs at least one resample"));
    }
    let (pos, neg) = split_classes(labels);
    let diffs: Vec<f64> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|b| {
            let idx = resample(&pos, &neg, seed, b);
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let a: Vec<f64> = idx.iter().map(|&i| scores_a[i]).collect();
            let bb: Vec<f64> = idx.iter().map(|&i| scores_b[i]).collect();
            auc(&a, &l).expect("both classes") - auc(&bb, &l).expect("both classes")
        })
        .collect();
    let le = diffs.iter().filter(|&&d| d <= 0.0).count() as f64;
    let ge = diffs.iter().filter(|&&d| d >= 0.0).count() as f64;
    let p = 2.0 * le.min(ge) / n_resamples as f64;
    Ok(p.min(1.0))
}
