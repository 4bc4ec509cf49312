mod common;

use wz_core::verify::run_suite;

// The full suite is exercised end to end through the command-line binary's
// own tests; this direct run is kept for profiling and debugging.
#[test]
#[ignore = "slow; run explicitly when tuning the suite"]
fn full_suite_passes_on_bundled_source() {
    let src = common::dsbs();
    let report = run_suite(&src, 7).unwrap();
    println!("{}", report.render());
    assert!(report.all_pass(), "\n{}", report.render());
}
