use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from threshold `+inf` (point (0, 0)) down to the smallest
/// score (point (1, 1)). A sample is predicted positive when
/// `score >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub ci95: Option<(f64, f64)>,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub(crate) fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("roc scores".into()));
    }
    let mut pos = 0;
    for &l in labels {
        match l {
            1 => pos += 1,
            0 => {}
            other => return Err(Error::InvalidLabels(format!("label {other} is not 0 or 1"))),
        }
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidLabels(
            "ROC analysis needs both positive and negative samples".into(),
        ));
    }
    Ok((pos, neg))
}

/// Tie-grouped sweep: yields cumulative (tp, fp) after each distinct score,
/// scores descending.
fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// Twice the trapezoid area in count units: `sum dFP * (TP_prev + TP)`.
fn doubled_area(steps: &[(f64, u64, u64)]) -> u64 {
    let (mut tp0, mut fp0) = (0u64, 0u64);
    let mut area = 0u64;
    for &(_, tp, fp) in steps {
        area += (fp - fp0) * (tp + tp0);
        tp0 = tp;
        fp0 = fp;
    }
    area
}

pub fn roc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let steps = sweep(scores, labels);
    let mut points = Vec::with_capacity(steps.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    for &(s, tp, fp) in &steps {
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = doubled_area(&steps) as f64 / (2 * n_pos * n_neg) as f64;
    Ok(RocCurve {
        points,
        auc,
        ci95: None,
        n_pos,
        n_neg,
    })
}

/// Trapezoid AUC without materialising the curve.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let steps = sweep(scores, labels);
    Ok(doubled_area(&steps) as f64 / (2 * n_pos * n_neg) as f64)
}

/// Pair-counting AUC: `(concordant + ties / 2) / (n_pos * n_neg)`.
pub fn auc_mann_whitney(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut twice = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            if si > sj {
                twice += 2;
            } else if si == sj {
                twice += 1;
            }
        }
    }
    Ok(twice as f64 / (2 * n_pos * n_neg) as f64)
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows, values in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr).expect("string write");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Vec<RocPoint>> {
        let mut lines = crate::io::data_lines(text);
        match lines.next() {
            Some("threshold,fpr,tpr") => {}
            other => return Err(Error::invalid(format!("unexpected ROC header {other:?}"))),
        }
        lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 3 {
                    return Err(Error::invalid(format!("bad ROC row {l:?}")));
                }
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number {s:?} in ROC row")))
                };
                Ok(RocPoint {
                    threshold: num(f[0])?,
                    fpr: num(f[1])?,
                    tpr: num(f[2])?,
                })
            })
            .collect()
    }
}
