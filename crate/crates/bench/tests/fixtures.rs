use meandim_bench::{golden_circle, small_shift};

#[test]
fn fixture_sizes() {
    assert_eq!(golden_circle(100).len(), 100);
    assert_eq!(small_shift(2).len(), 36);
}

#[test]
fn golden_fixture_rotates_by_the_snapped_angle() {
    let a = golden_circle(100);
    // 0.618.. * 100 rounds to 62
    assert_eq!(a.step(0, 1, 0).unwrap(), 62);
}
