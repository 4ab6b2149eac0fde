mod common;

use std::time::Instant;

use common::{gradient_suite, FD_TOL};

#[test]
fn finite_differences_agree_with_backprop() {
    let t = Instant::now();
    let reports = gradient_suite();
    let elapsed = t.elapsed().as_secs_f64();
    for r in &reports {
        println!("{:<45} coords {:>4}  max rel err {:.2e}", r.name, r.coords, r.max_rel);
    }
    assert!(reports.len() >= 20, "only {} configurations", reports.len());
    for r in &reports {
        assert!(r.coords > 0, "{} checked nothing", r.name);
        assert!(r.max_rel < FD_TOL, "{}: relative error {:.3e}", r.name, r.max_rel);
    }
    assert!(elapsed < 60.0, "gradient suite took {elapsed:.1}s");
}
