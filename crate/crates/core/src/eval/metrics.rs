use crate::error::{Error, Result};

/// Confusion-matrix summary at a fixed threshold (`score >= threshold` is
/// predicted positive). Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn ppv_npv(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ThresholdMetrics> {
    if !threshold.is_finite() {
        return Err(Error::invalid("threshold must be finite"));
    }
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, 1) => tp += 1,
            (true, 0) => fp += 1,
            (false, 0) => tn += 1,
            (false, 1) => fn_ += 1,
            (_, other) => return Err(Error::InvalidLabels(format!("label {other} is not 0 or 1"))),
        }
    }
    Ok(ThresholdMetrics {
        tp,
        fp,
        tn,
        fn_,
        ppv: ratio(tp, tp + fp),
        npv: ratio(tn, tn + fn_),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
    })
}
