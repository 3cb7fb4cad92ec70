use std::collections::BTreeMap;

use meandim_core::genlin::{
    affinely_independent, enumerate_patterns, linearly_independent, pattern_generic_independent, pit_nonzero,
    random_extension_independent, rank, Independence, PatternMatrix, VectorFamily, TOL_RANK,
};
use meandim_core::{rng, Error};
use proptest::prelude::*;
use rand::Rng;

/// Rank by Gaussian elimination with partial pivoting, rows are the vectors.
fn gauss_rank(vectors: &[Vec<f64>], tol: f64) -> usize {
    let mut m: Vec<Vec<f64>> = vectors.to_vec();
    let cols = m.first().map_or(0, |v| v.len());
    let scale = m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else { break };
        if m[p][c].abs() <= tol * scale {
            continue;
        }
        m.swap(r, p);
        let pivot = m[r].clone();
        for row in m.iter_mut().skip(r + 1) {
            let f = row[c] / pivot[c];
            for (a, b) in row.iter_mut().zip(&pivot).skip(c) {
                *a -= f * b;
            }
        }
        r += 1;
    }
    r
}

/// Expanded determinant of the padded pattern with an all-ones row, as a map
/// from sorted label monomials to integer coefficients.
fn symbolic_det(p: &PatternMatrix) -> BTreeMap<Vec<u32>, i64> {
    let q = p.padded();
    let k = q.k();
    let mut rows: Vec<Vec<Option<u32>>> = q.rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
    rows.push(vec![None; k]);
    let mut poly = BTreeMap::new();
    let mut perm: Vec<usize> = (0..k).collect();
    permutations(&mut perm, 0, &mut |sigma| {
        let inversions = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).filter(|&(i, j)| sigma[i] > sigma[j]).count();
        let sign = if inversions % 2 == 0 { 1 } else { -1 };
        let mut mono: Vec<u32> = (0..k).filter_map(|i| rows[i][sigma[i]]).collect();
        mono.sort_unstable();
        *poly.entry(mono).or_insert(0) += sign;
    });
    poly.retain(|_, c| *c != 0);
    poly
}

fn permutations(v: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v.swap(i, j);
        permutations(v, i + 1, f);
        v.swap(i, j);
    }
}

/// Every filling of the grid with labels 1..=r_max that passes the pattern
/// rules and is in first-appearance canonical form.
fn brute_patterns(k: usize, l: usize, r_max: u32) -> Vec<PatternMatrix> {
    let cells = (k - 1) * l;
    let mut out = Vec::new();
    let total = (r_max as u64).pow(cells as u32);
    for code in 0..total {
        let mut c = code;
        let flat: Vec<u32> = (0..cells)
            .map(|_| {
                let v = (c % r_max as u64) as u32 + 1;
                c /= r_max as u64;
                v
            })
            .collect();
        let mut top = 0;
        if !flat.iter().all(|&v| {
            let ok = v <= top + 1;
            top = top.max(v);
            ok
        }) {
            continue;
        }
        let rows: Vec<Vec<u32>> = flat.chunks(l).map(|r| r.to_vec()).collect();
        if let Ok(p) = PatternMatrix::new(rows) {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn lemma_valid(k: usize, l: usize) -> bool {
    k >= l.max(2)
}

#[test]
fn enumeration_matches_brute_force() {
    for k in 2..=4 {
        for l in 1..=3 {
            let mut lib = enumerate_patterns(k, l, 6);
            lib.sort();
            assert_eq!(lib, brute_patterns(k, l, 6), "k {k} l {l}");
        }
    }
}

#[test]
fn small_lemma_patterns_are_generic() {
    let mut seen = 0;
    for k in 2..=3 {
        for l in 1..=3 {
            if !lemma_valid(k, l) {
                continue;
            }
            for p in enumerate_patterns(k, l, 6) {
                let rep = pattern_generic_independent(&p, 1000, 7).unwrap();
                assert_eq!(rep.rate.rate, 1.0, "{:?}", p.rows);
                assert!(rep.pit_nonzero, "{:?}", p.rows);
                seen += 1;
            }
        }
    }
    assert!(seen >= 10);
}

#[test]
fn symbolic_oracle_agrees_with_identity_test() {
    let mut checked = 0;
    for l in 1..=3 {
        for p in enumerate_patterns(3, l, 6) {
            let symbolic = !symbolic_det(&p).is_empty();
            assert_eq!(symbolic, pit_nonzero(&p, 8, 3), "{:?}", p.rows);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn both_tests_see_a_vanishing_determinant() {
    // equal rows break the pattern rules, so build the matrix directly
    let p = PatternMatrix { rows: vec![vec![1, 2, 3], vec![1, 2, 3]] };
    assert!(symbolic_det(&p).is_empty());
    assert!(!pit_nonzero(&p, 8, 0));
}

#[test]
fn invalid_shapes_are_rejected() {
    let wide = PatternMatrix::new(vec![vec![1, 2, 3]]).unwrap();
    assert!(matches!(pattern_generic_independent(&wide, 10, 0), Err(Error::InvalidPattern(_))));
    assert!(matches!(PatternMatrix::new(vec![vec![1, 1]]), Err(Error::InvalidPattern(_))));
    assert!(matches!(PatternMatrix::new(vec![vec![1, 3]]), Err(Error::InvalidPattern(_))));
    assert!(matches!(PatternMatrix::new(vec![vec![1, 2], vec![2, 1], vec![1, 3]]), Err(Error::InvalidPattern(_))));
}

#[test]
fn random_extensions_are_independent() {
    let base = VectorFamily::new(4, vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
    let lin = random_extension_independent(&base, 2, 500, Independence::Linear, 1).unwrap();
    assert_eq!(lin.rate, 1.0);
    let aff = random_extension_independent(&base, 3, 500, Independence::Affine, 1).unwrap();
    assert_eq!(aff.rate, 1.0);
    assert!(matches!(
        random_extension_independent(&base, 4, 1, Independence::Affine, 1),
        Err(Error::CaseBoundViolated { rs: 6, bound: 5 })
    ));
}

fn random_family(seed: u64, dim: usize, count: usize, rank_cap: usize) -> Vec<Vec<f64>> {
    let mut g = rng::stream(seed, "family", 0);
    let basis: Vec<Vec<f64>> = (0..rank_cap).map(|_| (0..dim).map(|_| g.gen_range(-1.0..1.0)).collect()).collect();
    (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..rank_cap).map(|_| g.gen_range(-1.0..1.0)).collect();
            (0..dim).map(|j| (0..rank_cap).map(|i| c[i] * basis[i][j]).sum()).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_matches_elimination(seed in any::<u64>(), dim in 1usize..7, count in 1usize..7, cap in 1usize..7) {
        let vs = random_family(seed, dim, count, cap);
        let scale = vs.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        let lib = rank(&vs, dim, TOL_RANK, scale);
        prop_assert_eq!(lib, gauss_rank(&vs, 1e-9));
        prop_assert!(lib <= cap.min(dim).min(count));
    }

    #[test]
    fn affine_independence_matches_lifted_rank(seed in any::<u64>(), dim in 1usize..6, count in 1usize..7, cap in 1usize..7) {
        let vs = random_family(seed, dim, count, cap);
        let fam = VectorFamily::new(dim, vs.clone()).unwrap();
        // affinely independent iff the vectors with a 1 appended are linearly independent
        let lifted: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().copied().chain([1.0]).collect()).collect();
        prop_assert_eq!(affinely_independent(&fam, TOL_RANK), gauss_rank(&lifted, 1e-9) == count);
        let lin = linearly_independent(&fam, TOL_RANK);
        prop_assert_eq!(lin, gauss_rank(&vs, 1e-9) == count);
    }
}
