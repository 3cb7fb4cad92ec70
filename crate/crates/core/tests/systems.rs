use meandim_core::systems::{
    act, check_commutation, circle_rotation, dynamical_metric, fixed_point, period_table, product, torus_rotation,
    trivial_fiber, truncated_shift, GroupElement, SystemSpec, SYSTEM_SCHEMA,
};
use meandim_core::Error;
use proptest::prelude::*;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[test]
fn circle_shift_is_snapped_to_the_grid() {
    let a = circle_rotation(0.25, 8).unwrap();
    for x in 0..8 {
        assert_eq!(a.step(0, 1, x).unwrap(), (x + 2) % 8);
        assert_eq!(a.step(0, -1, x).unwrap(), (x + 6) % 8);
    }
    let p = period_table(&a, 10, 1);
    assert!(p.periods.iter().all(|&q| q == Some(4)));
    assert_eq!(p.adjusted, vec![3; 8]);
}

#[test]
fn golden_circle_has_no_short_periods() {
    let a = circle_rotation(GOLDEN, 200).unwrap();
    assert!(period_table(&a, 2, 1).p_set(2).is_empty());
}

#[test]
fn torus_generators_commute() {
    let a = torus_rotation(&[GOLDEN, 2f64.sqrt() - 1.0], 16).unwrap();
    assert_eq!(a.len(), 256);
    assert!(check_commutation(&a).commute);
    let g = GroupElement(vec![3, -2]);
    for x in [0, 17, 255] {
        let y = act(&a, &g, x).unwrap();
        assert_eq!(act(&a, &-&g, y).unwrap(), x);
    }
}

#[test]
fn product_uses_max_metric() {
    let a = circle_rotation(GOLDEN, 10).unwrap();
    let b = trivial_fiber(3, 1).unwrap();
    let p = product(&a, &b).unwrap();
    assert_eq!(p.len(), 30);
    for i in 0..30 {
        for j in 0..30 {
            let want = a.space.dist.get(i / 3, j / 3).max(b.space.dist.get(i % 3, j % 3));
            assert_eq!(p.space.dist.get(i, j), want);
        }
        assert_eq!(p.step(0, 1, i).unwrap(), a.step(0, 1, i / 3).unwrap() * 3 + i % 3);
    }
}

#[test]
fn fiber_is_fixed_and_evenly_spaced() {
    let f = trivial_fiber(5, 2).unwrap();
    assert_eq!(f.k(), 2);
    for x in 0..5 {
        assert_eq!(act(&f, &GroupElement(vec![4, -7]), x).unwrap(), x);
    }
    assert_eq!(f.space.dist.get(0, 4), 1.0);
    assert_eq!(f.space.dist.get(1, 2), 0.25);
    assert!(matches!(trivial_fiber(1, 1), Err(Error::InvalidInput(_))));
}

#[test]
fn shift_window_size() {
    let s = truncated_shift(1, 5, 3).unwrap();
    assert_eq!(s.len(), 216);
    assert!(check_commutation(&s).commute);
}

#[test]
fn spec_builds_each_family() {
    let cases = [
        r#"{"schema":"meandim.system/1","generator":"circle","params":{"alpha":0.3,"n":10}}"#,
        r#"{"schema":"meandim.system/1","generator":"torus","params":{"alphas":[0.3,0.7],"grid":4}}"#,
        r#"{"schema":"meandim.system/1","generator":"shift","params":{"m":1,"resolution":2,"window":2}}"#,
        r#"{"schema":"meandim.system/1","generator":"fixed","k":2}"#,
        r#"{"schema":"meandim.system/1","generator":"identity-grid","params":{"side":3}}"#,
        r#"{"schema":"meandim.system/1","generator":"fiber","params":{"m":3}}"#,
        r#"{"schema":"meandim.system/1","generator":"product","params":{"factors":[
            {"schema":"meandim.system/1","generator":"circle","params":{"alpha":0.3,"n":10}},
            {"schema":"meandim.system/1","generator":"fiber","params":{"m":3}}]}}"#,
        r#"{"schema":"meandim.system/1","dist":[[0,1],[1,0]],"generators":[[1,0]]}"#,
    ];
    let sizes = [10, 16, 9, 1, 9, 3, 30, 2];
    for (text, want) in cases.iter().zip(sizes) {
        let spec: SystemSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.schema, SYSTEM_SCHEMA);
        assert_eq!(spec.build().unwrap().len(), want, "{text}");
    }
}

#[test]
fn spec_rejects_bad_input() {
    let bad = [
        r#"{"schema":"meandim.system/9","generator":"fixed"}"#,
        r#"{"schema":"meandim.system/1","generator":"nope"}"#,
        r#"{"schema":"meandim.system/1","generator":"circle","params":{"n":10}}"#,
        r#"{"schema":"meandim.system/1","dist":[[0,1],[1,0]],"generators":[[1,5]]}"#,
        r#"{"schema":"meandim.system/1","dist":[[0,1,5],[1,0,1],[5,1,0]],"generators":[[0,1,2]]}"#,
    ];
    for text in bad {
        let spec: SystemSpec = serde_json::from_str(text).unwrap();
        assert!(matches!(spec.build(), Err(Error::InvalidInput(_))), "{text}");
    }
}

#[test]
fn one_point_metric_is_zero() {
    let a = fixed_point(1).unwrap();
    assert_eq!(dynamical_metric(&a, 5).unwrap().get(0, 0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dynamical_metric_dominates_and_grows(alpha in 0.01f64..0.99, n in 5usize..60, steps in 1u32..6) {
        let a = circle_rotation(alpha, n).unwrap();
        let lo = dynamical_metric(&a, steps).unwrap();
        let hi = dynamical_metric(&a, steps + 1).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!(lo.get(i, j) >= a.space.dist.get(i, j));
                prop_assert!(hi.get(i, j) >= lo.get(i, j));
                prop_assert_eq!(lo.get(i, j), lo.get(j, i));
            }
        }
    }

    #[test]
    fn action_is_additive(a1 in -20i64..20, a2 in -20i64..20, b1 in -20i64..20, b2 in -20i64..20, x in 0usize..64) {
        let t = torus_rotation(&[GOLDEN, 0.3], 8).unwrap();
        let g = GroupElement(vec![a1, a2]);
        let h = GroupElement(vec![b1, b2]);
        let lhs = act(&t, &(&g + &h), x).unwrap();
        let rhs = act(&t, &g, act(&t, &h, x).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }
}
