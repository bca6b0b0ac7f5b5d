use std::io::Write;

use distill_core::selftest::{run_with, SelftestOptions, CRITERIA};

// Direct stderr writes bypass the test harness capture, so the summary is always shown.
fn show(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance() {
    let results = run_with(&SelftestOptions::default(), |r| show(&r.to_string()));
    assert_eq!(results.len(), CRITERIA);
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    show(&format!("{} of {CRITERIA} criteria passed", CRITERIA - failed.len()));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
