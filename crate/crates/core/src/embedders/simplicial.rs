use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::systems::SampledSpace;

/// Simplices of the clique complex at sample resolution: cliques of at most
/// `max_dim + 1` points, pairwise within the resolution, maximal among those.
pub fn resolution_complex(s: &SampledSpace, max_dim: usize) -> Vec<Vec<usize>> {
    let n = s.len();
    let res = s.resolution() * (1.0 + 1e-9);
    let nbrs: Vec<Vec<usize>> =
        (0..n).map(|i| (i + 1..n).filter(|&j| s.dist.get(i, j) <= res).collect()).collect();
    let mut all: Vec<Vec<usize>> = Vec::new();
    fn grow(c: &mut Vec<usize>, cands: &[usize], cap: usize, s: &SampledSpace, res: f64, nbrs: &[Vec<usize>], out: &mut Vec<Vec<usize>>) {
        let mut extended = false;
        if c.len() < cap {
            for &j in cands {
                if c.iter().all(|&i| s.dist.get(i, j) <= res) {
                    extended = true;
                    c.push(j);
                    let next: Vec<usize> = nbrs[j].iter().copied().filter(|x| cands.contains(x)).collect();
                    grow(c, &next, cap, s, res, nbrs, out);
                    c.pop();
                }
            }
        }
        if !extended {
            out.push(c.clone());
        }
    }
    for i in 0..n {
        let mut c = vec![i];
        grow(&mut c, &nbrs[i], max_dim + 1, s, res, &nbrs, &mut all);
    }
    // Drop cliques contained in a larger one (those that could not grow
    // only because their extensions start at a smaller index).
    let sets: Vec<Vec<usize>> = all;
    let keep: Vec<bool> = sets
        .iter()
        .map(|a| !sets.iter().any(|b| b.len() > a.len() && a.iter().all(|x| b.contains(x))))
        .collect();
    let mut out: Vec<Vec<usize>> = sets.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect();
    out.sort();
    out.dedup();
    out
}

/// Euclidean distance between the convex hulls of two small point sets.
pub fn hull_distance(p: &[&[f64]], q: &[&[f64]]) -> f64 {
    let mut best = f64::INFINITY;
    for sm in 1u32..(1 << p.len()) {
        let ps: Vec<&[f64]> = (0..p.len()).filter(|i| sm >> i & 1 == 1).map(|i| p[i]).collect();
        for tm in 1u32..(1 << q.len()) {
            let qs: Vec<&[f64]> = (0..q.len()).filter(|j| tm >> j & 1 == 1).map(|j| q[j]).collect();
            if let Some(d) = face_distance(&ps, &qs) {
                best = best.min(d);
            }
        }
    }
    best
}

/// Distance between relative interiors of two faces if the unconstrained
/// minimiser is unique and lies in both closed faces.
fn face_distance(p: &[&[f64]], q: &[&[f64]]) -> Option<f64> {
    let dim = p[0].len();
    let cols = p.len() - 1 + q.len() - 1;
    let rhs = DVector::from_fn(dim, |r, _| q[0][r] - p[0][r]);
    if cols == 0 {
        return Some(rhs.norm());
    }
    let m = DMatrix::from_fn(dim, cols, |r, c| {
        if c < p.len() - 1 {
            p[c + 1][r] - p[0][r]
        } else {
            -(q[c - (p.len() - 1) + 1][r] - q[0][r])
        }
    });
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.max();
    if top <= 0.0 || svd.singular_values.min() <= 1e-12 * top || cols > dim {
        return None;
    }
    let coef = svd.solve(&rhs, 0.0).ok()?;
    let tol = 1e-12;
    let (a, b) = coef.as_slice().split_at(p.len() - 1);
    let feasible = |w: &[f64]| w.iter().all(|&x| x >= -tol) && w.iter().sum::<f64>() <= 1.0 + tol;
    if !feasible(a) || !feasible(b) {
        return None;
    }
    Some((&m * &coef - rhs).norm())
}

/// A pair of vertex-disjoint simplices whose images meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub distance: f64,
}

/// First collision of the piecewise-linear interpolant of `outputs` over
/// `simplices` among pairs whose vertex sets are at least `eta` apart.
pub fn pl_collision<V: AsRef<[f64]>>(
    outputs: &[V],
    s: &SampledSpace,
    simplices: &[Vec<usize>],
    eta: f64,
    tol: f64,
) -> Option<Collision> {
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = simplices
        .iter()
        .map(|sx| {
            let dim = outputs[sx[0]].as_ref().len();
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for &v in sx {
                for (c, &x) in outputs[v].as_ref().iter().enumerate() {
                    lo[c] = lo[c].min(x);
                    hi[c] = hi[c].max(x);
                }
            }
            (lo, hi)
        })
        .collect();
    for (i, a) in simplices.iter().enumerate() {
        for (j, b) in simplices.iter().enumerate().skip(i + 1) {
            if a.iter().any(|x| b.contains(x)) {
                continue;
            }
            if a.iter().any(|&x| b.iter().any(|&y| s.dist.get(x, y) < eta)) {
                continue;
            }
            let (la, ha) = &boxes[i];
            let (lb, hb) = &boxes[j];
            if la.iter().zip(hb).any(|(l, h)| *l > h + tol) || lb.iter().zip(ha).any(|(l, h)| *l > h + tol) {
                continue;
            }
            let pa: Vec<&[f64]> = a.iter().map(|&v| outputs[v].as_ref()).collect();
            let pb: Vec<&[f64]> = b.iter().map(|&v| outputs[v].as_ref()).collect();
            let d = hull_distance(&pa, &pb);
            if d <= tol {
                return Some(Collision { first: a.clone(), second: b.clone(), distance: d });
            }
        }
    }
    None
}
