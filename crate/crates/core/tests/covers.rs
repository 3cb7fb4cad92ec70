use meandim_core::covers::{
    is_admissible, lebesgue_number, mesh, nerve, order, partition_of_unity, widim, CandidateFamily, Cover, WidimMode,
    WidimOptions,
};
use meandim_core::rng;
use meandim_core::systems::{DistMatrix, SampledSpace};
use meandim_core::Error;
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-9;

fn line(n: usize) -> SampledSpace {
    let step = 1.0 / (n - 1) as f64;
    SampledSpace::new(
        (0..n).map(|i| i.to_string()).collect(),
        DistMatrix::from_fn(n, |i, j| i.abs_diff(j) as f64 * step),
        Some(1),
    )
    .unwrap()
}

fn random_plane(n: usize, seed: u64) -> SampledSpace {
    let mut g = rng::stream(seed, "plane-sample", 0);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (g.gen(), g.gen())).collect();
    let dist = DistMatrix::from_fn(n, |i, j| (pts[i].0 - pts[j].0).abs().max((pts[i].1 - pts[j].1).abs()));
    SampledSpace::new((0..n).map(|i| i.to_string()).collect(), dist, Some(2)).unwrap()
}

/// Every closed ball B(x, d(x, y)) of diameter at most eps, deduplicated.
fn brute_balls(s: &SampledSpace, eps: f64) -> Vec<Vec<usize>> {
    let n = s.len();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for x in 0..n {
        for y in 0..n {
            let r = s.dist.get(x, y);
            let ball: Vec<usize> = (0..n).filter(|&z| s.dist.get(x, z) <= r + TOL).collect();
            let diam = ball.iter().flat_map(|&a| ball.iter().map(move |&b| (a, b))).map(|(a, b)| s.dist.get(a, b)).fold(0.0, f64::max);
            if r <= eps + TOL && diam <= eps + TOL && !out.contains(&ball) {
                out.push(ball);
            }
        }
    }
    out
}

/// Minimal order over admissible ball covers. An admissible cover keeps its
/// admissibility and does not raise its order when shrunk to one serving set
/// per point, so it suffices to range over serving-set choices.
fn brute_widim(s: &SampledSpace, eps: f64, lam: f64) -> Option<usize> {
    let n = s.len();
    let balls = brute_balls(s, eps);
    let servers: Vec<Vec<usize>> = (0..n)
        .map(|x| {
            let need: Vec<usize> = (0..n).filter(|&z| s.dist.get(x, z) <= lam + TOL).collect();
            (0..balls.len()).filter(|&b| need.iter().all(|z| balls[b].contains(z))).collect()
        })
        .collect();
    if servers.iter().any(|v| v.is_empty()) {
        return None;
    }
    let mut best = usize::MAX;
    let mut chosen = vec![false; balls.len()];
    let mut mult = vec![0usize; n];
    fn go(
        x: usize,
        balls: &[Vec<usize>],
        servers: &[Vec<usize>],
        chosen: &mut [bool],
        mult: &mut [usize],
        best: &mut usize,
    ) {
        let cur = mult.iter().copied().max().unwrap_or(0).saturating_sub(1);
        if cur >= *best {
            return;
        }
        if x == servers.len() {
            *best = cur;
            return;
        }
        if servers[x].iter().any(|&b| chosen[b]) {
            go(x + 1, balls, servers, chosen, mult, best);
            return;
        }
        for &b in &servers[x] {
            chosen[b] = true;
            for &z in &balls[b] {
                mult[z] += 1;
            }
            go(x + 1, balls, servers, chosen, mult, best);
            for &z in &balls[b] {
                mult[z] -= 1;
            }
            chosen[b] = false;
        }
    }
    go(0, &balls, &servers, &mut chosen, &mut mult, &mut best);
    Some(best)
}

fn balls_only() -> WidimOptions {
    WidimOptions { family: CandidateFamily::Balls, ..WidimOptions::default() }
}

#[test]
fn line_sample_has_order_one() {
    let s = line(11);
    let r = widim(&s, 0.35, 0.1, WidimMode::Exact, &WidimOptions::default()).unwrap();
    assert_eq!(r.order, 1);
    assert!(is_admissible(&r.cover, &s, 0.35, 0.1));
    assert!(mesh(&r.cover, &s).unwrap() <= 0.35 + TOL);
    assert!(lebesgue_number(&r.cover, &s).unwrap() >= 0.1 - TOL);
}

#[test]
fn exact_matches_brute_force_and_greedy_bounds_it() {
    let mut checked = 0;
    let mut positive = 0;
    for seed in 0..40u64 {
        let n = 6 + (seed as usize % 9);
        let s = random_plane(n, seed);
        let (eps, lam) = (0.5, 0.2);
        let brute = brute_widim(&s, eps, lam);
        let exact = widim(&s, eps, lam, WidimMode::Exact, &balls_only());
        match brute {
            None => assert!(matches!(exact, Err(Error::Infeasible(_)))),
            Some(b) => {
                let e = exact.unwrap();
                assert_eq!(e.order, b, "seed {seed}, n {n}");
                assert!(is_admissible(&e.cover, &s, eps, lam));
                assert_eq!(order(&e.cover).unwrap(), e.order);
                let g = widim(&s, eps, lam, WidimMode::Greedy, &balls_only()).unwrap();
                assert!(g.order >= e.order);
                assert!(is_admissible(&g.cover, &s, eps, lam));
                checked += 1;
                positive += usize::from(b > 0);
            }
        }
    }
    assert!(checked >= 20, "only {checked} feasible samples");
    assert!(positive >= 5, "only {positive} samples with positive order");
}

#[test]
fn order_and_nerve_of_a_chain() {
    let c = Cover::new(vec![vec![0, 1], vec![1, 2], vec![2, 3]], 4).unwrap();
    assert_eq!(order(&c).unwrap(), 1);
    let nv = nerve(&c);
    assert_eq!(nv.dim(), 1);
    assert_eq!(nv.edges(), vec![(0, 1), (1, 2)]);
}

#[test]
fn cover_must_cover() {
    assert!(matches!(Cover::new(vec![vec![0, 1]], 3), Err(Error::NotACover(2))));
}

#[test]
fn zero_eps_is_rejected() {
    let s = line(5);
    assert!(matches!(widim(&s, 0.0, 0.1, WidimMode::Exact, &WidimOptions::default()), Err(Error::InvalidInput(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_of_unity_sums_to_one(seed in any::<u64>(), n in 3usize..14) {
        let s = random_plane(n, seed);
        let r = widim(&s, 0.5, 0.0, WidimMode::Greedy, &WidimOptions::default()).unwrap();
        let p = partition_of_unity(&r.cover, &s, None).unwrap();
        for z in 0..n {
            let total: f64 = p.weights.iter().map(|row| row[z]).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (w, row) in p.weights.iter().enumerate() {
                let val = row[z];
                prop_assert!(val >= 0.0);
                if val > 0.0 {
                    prop_assert!(r.cover.sets[w].contains(&z));
                }
            }
        }
    }

    #[test]
    fn greedy_is_admissible_and_not_below_exact(seed in any::<u64>(), n in 3usize..11) {
        let s = random_plane(n, seed);
        let e = widim(&s, 0.4, 0.01, WidimMode::Exact, &WidimOptions::default());
        let g = widim(&s, 0.4, 0.01, WidimMode::Greedy, &WidimOptions::default());
        match (e, g) {
            (Ok(e), Ok(g)) => {
                prop_assert!(g.order >= e.order);
                prop_assert!(is_admissible(&g.cover, &s, 0.4, 0.01));
            }
            (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {}
            (e, g) => prop_assert!(false, "mismatch {:?} {:?}", e.map(|r| r.order), g.map(|r| r.order)),
        }
    }
}
