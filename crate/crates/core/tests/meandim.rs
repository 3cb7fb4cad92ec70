use meandim_core::covers::{CandidateFamily, WidimMode, WidimOptions};
use meandim_core::systems::{circle_rotation, fixed_point, truncated_shift};
use meandim_core::{mdim_curve, mdim_estimate, Error};

#[test]
fn one_point_system_has_zero_mean_dimension() {
    let a = fixed_point(1).unwrap();
    for mode in [WidimMode::Exact, WidimMode::Greedy] {
        let c = mdim_curve(&a, 0.4, 0.0, &[1, 2, 3, 4], mode, &WidimOptions::default()).unwrap();
        let e = mdim_estimate(&c, 3).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.upper_bound_only, mode == WidimMode::Greedy);
    }
}

#[test]
fn rows_are_sorted_and_normalised() {
    let a = truncated_shift(1, 3, 2).unwrap();
    let opts = WidimOptions { family: CandidateFamily::Balls, ..WidimOptions::default() };
    let c = mdim_curve(&a, 0.4, 0.0, &[2, 1, 2], WidimMode::Exact, &opts).unwrap();
    assert_eq!(c.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![1, 2]);
    for r in &c.rows {
        assert_eq!(r.ratio, r.value as f64 / r.n as f64);
    }
    let e = mdim_estimate(&c, 1).unwrap();
    assert!(!e.upper_bound_only);
}

#[test]
fn bad_requests_are_rejected() {
    let a = circle_rotation(0.3, 10).unwrap();
    let opts = WidimOptions::default();
    assert!(matches!(mdim_curve(&a, 0.4, 0.0, &[0, 1], WidimMode::Greedy, &opts), Err(Error::InvalidInput(_))));
    let c = mdim_curve(&a, 0.4, 0.0, &[1], WidimMode::Greedy, &opts).unwrap();
    assert!(matches!(mdim_estimate(&c, 2), Err(Error::InsufficientRows { needed: 2, have: 1 })));
}
