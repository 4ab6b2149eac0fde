mod common;

use common::{auc_oracle_cases, conv_pool_oracle_cases, mann_whitney, rng, random_scored_set};
use dwic_core::eval::{auc, roc};

#[test]
fn conv_and_pool_match_direct_loops() {
    let (conv, max, avg) = conv_pool_oracle_cases(100, 7);
    assert!(conv <= 1e-5, "conv deviates by {conv:e}");
    assert!(max <= 1e-5, "max pool deviates by {max:e}");
    assert!(avg <= 1e-5, "avg pool deviates by {avg:e}");
}

#[test]
fn trapezoid_auc_equals_mann_whitney() {
    let worst = auc_oracle_cases(1000, 11);
    assert!(worst <= 1e-12, "worst deviation {worst:e}");
}

#[test]
fn mann_whitney_oracle_hand_cases() {
    assert_eq!(mann_whitney(&[0.1, 0.9], &[0, 1]), 1.0);
    assert_eq!(mann_whitney(&[0.9, 0.1], &[0, 1]), 0.0);
    assert_eq!(mann_whitney(&[0.5, 0.5], &[0, 1]), 0.5);
    // 2 positives x 2 negatives: (0.8 > 0.3, 0.8 > 0.6, 0.4 > 0.3, 0.4 < 0.6)
    assert_eq!(mann_whitney(&[0.8, 0.4, 0.3, 0.6], &[1, 1, 0, 0]), 0.75);
}

#[test]
fn roc_points_are_monotone_and_end_at_corners() {
    let mut r = rng(3);
    for _ in 0..200 {
        let (s, l) = random_scored_set(&mut r, 40);
        let c = roc(&s, &l).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            assert!(w[1].threshold < w[0].threshold);
        }
        assert_eq!(c.auc, auc(&s, &l).unwrap());
    }
}
