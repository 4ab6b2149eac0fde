//! ROC analysis, AUC, resampling statistics and threshold metrics.

pub mod bootstrap;
pub mod metrics;
pub mod roc;
pub mod svg;

pub use bootstrap::{bootstrap_ci, paired_auc_test};
pub use metrics::{ppv_npv, ThresholdMetrics};
pub use roc::{auc, auc_mann_whitney, roc, RocCurve, RocPoint};

/// `auc,ci_lo,ci_hi,n_pos,n_neg` summary line with header.
pub fn summary_csv(curve: &RocCurve) -> String {
    let (lo, hi) = curve.ci95.unwrap_or((f64::NAN, f64::NAN));
    format!(
        "auc,ci_lo,ci_hi,n_pos,n_neg\n{},{},{},{},{}\n",
        curve.auc, lo, hi, curve.n_pos, curve.n_neg
    )
}
