//! Property suite for the PMF and the three samplers.

mod common;

use common::sampling_suite as suite;

#[test]
fn pmf_normalizes() {
    suite::normalization().unwrap();
}

#[test]
fn pmf_reduces_without_offset() {
    suite::zero_offset_reduction().unwrap();
}

#[test]
fn pmf_is_scale_invariant() {
    suite::scale_invariance().unwrap();
}

#[test]
fn pmf_is_monotone() {
    suite::monotonicity().unwrap();
}

#[test]
fn asm3_children_stay_near_parents() {
    suite::asm3_geometry().unwrap();
}

#[test]
fn asm1_draws_grid_points() {
    suite::asm1_subset().unwrap();
}

#[test]
fn asm2_keeps_the_largest_residuals() {
    suite::asm2_top_m().unwrap();
}

#[test]
fn asm2_avoids_the_zero_half() {
    suite::asm2_left_half().unwrap();
}

#[test]
fn uniform_draw_frequencies() {
    let r = suite::multinomial_frequencies(2024);
    println!("{r:?}");
    // 441 indices at 3 standard errors each: about one exceedance is expected.
    assert!(r.within_3se >= 0.99, "{r:?}");
    assert!(r.worst_se <= 5.0, "{r:?}");
}
