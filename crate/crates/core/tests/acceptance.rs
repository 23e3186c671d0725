//! One test per acceptance criterion; each prints a single PASS/FAIL line.

use std::io::Write;

use bandgap::selftest::{run_criterion, CRITERION_COUNT};

fn check(id: usize) {
    let report = run_criterion(id);
    // written to the handle rather than through println!, so the line shows
    // without --nocapture
    let _ = writeln!(std::io::stdout().lock(), "{report}");
    assert!(report.passed, "{report}");
}

#[test]
fn criterion_1_limit_oracle() {
    check(1);
}

#[test]
fn criterion_2_determinant_identity() {
    check(2);
}

#[test]
fn criterion_3_design_round_trip() {
    check(3);
}

#[test]
fn criterion_4_analytic_solver_cases() {
    check(4);
}

#[test]
fn criterion_5_discretization_oracle() {
    check(5);
}

#[test]
fn criterion_6_enclosure() {
    check(6);
}

#[test]
fn criterion_7_convergence() {
    check(7);
}

#[test]
fn criterion_8_two_gap_end_to_end() {
    check(8);
}

#[test]
fn criterion_9_structural_properties() {
    check(9);
}

#[test]
fn suite_size() {
    assert_eq!(CRITERION_COUNT, 9);
}
