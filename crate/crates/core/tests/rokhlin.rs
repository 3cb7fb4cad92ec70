use meandim_core::rokhlin::{
    build_circle_towers, build_circle_towers_with_margin, closure_of, convergents, product_towers, pullback,
    rational_witness, verify_towers, FactorMap, TowerSystem, TowerViolation,
};
use meandim_core::systems::{act, circle_rotation, product, torus_rotation, trivial_fiber, GroupElement, SampledAction};
use meandim_core::Error;
use proptest::prelude::*;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Direct check: pairwise disjoint closed translates inside each tower and
/// translates of the bases covering every point.
fn oracle_valid(t: &TowerSystem, a: &SampledAction) -> bool {
    let n = a.len();
    let elems = GroupElement::box_elements(a.k(), t.n);
    let mut covered = vec![false; n];
    for base in &t.bases {
        let cl: Vec<usize> = (0..n)
            .filter(|&z| base.iter().any(|&u| a.space.dist.get(z, u) <= t.margin * (1.0 + 1e-9)))
            .collect();
        let translates: Vec<Vec<usize>> = elems
            .iter()
            .map(|g| {
                let mut v: Vec<usize> = cl.iter().map(|&z| act(a, g, z).unwrap()).collect();
                v.sort_unstable();
                v
            })
            .collect();
        for g in &elems {
            for &u in base {
                covered[act(a, g, u).unwrap()] = true;
            }
        }
        for i in 0..translates.len() {
            for j in i + 1..translates.len() {
                if translates[i].iter().any(|z| translates[j].binary_search(z).is_ok()) {
                    return false;
                }
            }
        }
    }
    covered.iter().all(|&c| c)
}

#[test]
fn single_translate_of_everything_is_a_tower() {
    let a = circle_rotation(GOLDEN, 30).unwrap();
    let t = TowerSystem { d: 0, n: 1, k: 1, points: 30, bases: vec![(0..30).collect()], margin: 0.0 };
    assert!(verify_towers(&t, &a).valid);
    assert!(oracle_valid(&t, &a));
}

#[test]
fn overlap_and_gap_are_witnessed() {
    let a = circle_rotation(0.1, 10).unwrap();
    let t = TowerSystem { d: 0, n: 2, k: 1, points: 10, bases: vec![vec![0, 1]], margin: 0.0 };
    let v = verify_towers(&t, &a);
    assert!(!v.valid);
    assert_eq!(v.overlaps, 1);
    assert_eq!(v.uncovered, 7);
    assert_eq!(v.witness, Some(TowerViolation::Overlap { tower: 0, g: vec![0], g_prime: vec![1], point: 1 }));
}

#[test]
fn horizon_and_shape_are_checked() {
    let a = circle_rotation(GOLDEN, 10).unwrap().with_horizon(3);
    let t = TowerSystem { d: 0, n: 5, k: 1, points: 10, bases: vec![vec![0]], margin: 0.0 };
    assert!(matches!(verify_towers(&t, &a).witness, Some(TowerViolation::Horizon { n: 5, horizon: 3 })));
    let a = circle_rotation(GOLDEN, 10).unwrap();
    let t = TowerSystem { d: 1, n: 2, k: 1, points: 10, bases: vec![vec![0]], margin: 0.0 };
    assert!(matches!(verify_towers(&t, &a).witness, Some(TowerViolation::Shape { .. })));
}

#[test]
fn convergents_of_golden_are_fibonacci() {
    let qs: Vec<i64> = convergents(GOLDEN, 100).iter().map(|c| c.1).collect();
    // 0/1 and 1/1 both have denominator 1
    assert_eq!(qs, vec![1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89]);
    assert_eq!(rational_witness(0.375, 10_000, 1e-12), Some((3, 8)));
    assert_eq!(rational_witness(GOLDEN, 10_000, 1e-12), None);
}

#[test]
fn rational_rotation_is_rejected() {
    assert!(matches!(build_circle_towers(0.25, 3, 100), Err(Error::RationalAlpha(1, 4))));
}

#[test]
fn zero_height_is_rejected() {
    assert!(matches!(build_circle_towers(GOLDEN, 0, 100), Err(Error::InvalidInput(_))));
}

#[test]
fn sqrt2_towers_have_two_towers() {
    let (a, t) = build_circle_towers(2f64.sqrt() - 1.0, 10, 2000).unwrap();
    assert_eq!(t.d, 1);
    assert_eq!(a.len(), 2000);
    assert!(verify_towers(&t, &a).valid);
    assert!(oracle_valid(&t, &a));
}

#[test]
fn closure_adds_neighbours() {
    let a = circle_rotation(GOLDEN, 20).unwrap();
    assert_eq!(closure_of(&[0], &a.space, 0.05), vec![0, 1, 19]);
    assert_eq!(closure_of(&[0], &a.space, 0.01), vec![0]);
}

#[test]
fn product_rules() {
    let (_, t) = build_circle_towers_with_margin(GOLDEN, 4, 100, 1.0).unwrap();
    assert_eq!(product_towers(std::slice::from_ref(&t), 4).unwrap(), t);
    assert!(matches!(product_towers(&[t.clone(), t.clone()], 5), Err(Error::HeightMismatch(4, 5))));
    let p = product_towers(&[t.clone(), t.clone()], 4).unwrap();
    assert_eq!(p.d, 3);
    assert_eq!(p.points, 10_000);
    // base 1 of the product is U_0 x U_1
    let want: Vec<usize> = t.bases[0].iter().flat_map(|&x| t.bases[1].iter().map(move |&y| x * 100 + y)).collect();
    let mut want = want;
    want.sort_unstable();
    assert_eq!(p.bases[1], want);
}

#[test]
fn small_torus_product_verifies() {
    let alphas = [GOLDEN, 2f64.sqrt() - 1.0];
    let parts: Vec<TowerSystem> =
        alphas.iter().map(|&al| build_circle_towers_with_margin(al, 6, 64, 0.5).unwrap().1).collect();
    let t = product_towers(&parts, 6).unwrap();
    let a = torus_rotation(&alphas, 64).unwrap();
    assert_eq!(t.d, 3);
    assert!(verify_towers(&t, &a).valid);
}

#[test]
fn coarse_circle_at_default_margin_fails_cleanly() {
    assert!(matches!(build_circle_towers(2f64.sqrt() - 1.0, 6, 64), Err(Error::ResolutionTooCoarse(_))));
}

#[test]
fn factor_map_checks() {
    let base = circle_rotation(GOLDEN, 10).unwrap();
    let total = product(&base, &trivial_fiber(3, 1).unwrap()).unwrap();
    let pi = FactorMap { map: (0..30).map(|x| x / 3).collect() };
    pi.check(&total, &base).unwrap();
    let mut bad = pi.clone();
    bad.map.swap(0, 3);
    assert!(matches!(bad.check(&total, &base), Err(Error::NotEquivariant(_, 0))));
    let short = FactorMap { map: vec![0; 29] };
    assert!(matches!(short.check(&total, &base), Err(Error::InvalidInput(_))));
}

#[test]
fn pullback_along_identity_is_the_tower() {
    let (a, t) = build_circle_towers_with_margin(GOLDEN, 4, 100, 1.0).unwrap();
    let pb = pullback(&t, &FactorMap::identity(100), &a, &a).unwrap();
    assert!(pb.covers(100));
    for (i, base) in t.bases.iter().enumerate() {
        for (vi, v) in pb.elements.iter().enumerate() {
            let mut img: Vec<usize> = base.iter().map(|&u| act(&a, &GroupElement(v.clone()), u).unwrap()).collect();
            img.sort_unstable();
            assert_eq!(pb.sets[i][vi], img);
        }
    }
}

#[test]
fn pullback_along_projection_is_a_union_of_fibers() {
    let (base, t) = build_circle_towers_with_margin(GOLDEN, 4, 100, 1.0).unwrap();
    let total = product(&base, &trivial_fiber(3, 1).unwrap()).unwrap();
    let pi = FactorMap { map: (0..300).map(|x| x / 3).collect() };
    let pb = pullback(&t, &pi, &total, &base).unwrap();
    assert!(pb.covers(300));
    for sets in &pb.sets {
        for s in sets {
            assert_eq!(s.len() % 3, 0);
            assert!(s.chunks(3).all(|c| c[0] % 3 == 0 && c[1] == c[0] + 1 && c[2] == c[0] + 2));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verify_agrees_with_oracle(
        alpha in 0.05f64..0.95,
        n in 1u32..5,
        margin_steps in 0u32..3,
        raw in proptest::collection::vec(proptest::collection::vec(0usize..24, 0..8), 1..3),
    ) {
        let a = circle_rotation(alpha, 24).unwrap();
        let bases: Vec<Vec<usize>> = raw.into_iter().map(|mut b| { b.sort_unstable(); b.dedup(); b }).collect();
        let t = TowerSystem { d: bases.len() - 1, n, k: 1, points: 24, bases, margin: margin_steps as f64 / 24.0 };
        let v = verify_towers(&t, &a);
        prop_assert_eq!(v.valid, oracle_valid(&t, &a));
        prop_assert_eq!(v.valid, v.witness.is_none());
    }
}
