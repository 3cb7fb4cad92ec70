use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::delay::TAU_EQ;
use super::observable::{sup_dist, Family, Observable};
use crate::covers::{mesh, order, partition_of_unity, Cover, TAU_CMP};
use crate::error::{Error, Result};
use crate::genlin::{affinely_independent, VectorFamily, TOL_RANK};
use crate::rng;
use crate::systems::SampledSpace;

/// Re-draws of the vertex perturbation before giving up.
pub const GP_RETRIES: u32 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsEmbedReport {
    pub eps: f64,
    pub delta: f64,
    /// max_z ||f(z) - g(z)||.
    pub sup_deviation: f64,
    /// Smallest output distance over pairs with d(x, y) >= eps.
    pub eps_margin: f64,
    pub tau_eq: f64,
    /// Pairs with d(x, y) >= eps and outputs within tau_eq.
    pub equal_pairs: usize,
    pub witness: Option<(usize, usize)>,
    /// Distinct support unions certified affinely independent.
    pub certified_supports: usize,
    /// Seeds of every attempt, the last one accepted.
    pub attempt_seeds: Vec<u64>,
    /// Perturbation radius used for the vertices.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsEmbedding {
    pub g: Observable,
    pub report: EpsEmbedReport,
}

/// Reflect into [0, 1].
pub(crate) fn reflect(x: f64) -> f64 {
    let t = x.rem_euclid(2.0);
    if t > 1.0 {
        2.0 - t
    } else {
        t
    }
}

/// Independent scan of an eps-embedding: (sup deviation, eps margin, equal pairs, witness).
pub fn scan_eps_embedding(
    s: &SampledSpace,
    f: &[Vec<f64>],
    g: &[Vec<f64>],
    eps: f64,
) -> (f64, f64, usize, Option<(usize, usize)>) {
    let n = s.len();
    let dev = (0..n).map(|z| sup_dist(&f[z], &g[z])).fold(0.0, f64::max);
    let mut margin = f64::INFINITY;
    let mut equal = 0;
    let mut witness = None;
    for x in 0..n {
        for y in x + 1..n {
            if s.dist.get(x, y) >= eps {
                let o = sup_dist(&g[x], &g[y]);
                if o <= TAU_EQ {
                    equal += 1;
                    witness.get_or_insert((x, y));
                }
                margin = margin.min(o);
            }
        }
    }
    (dev, margin, equal, witness)
}

/// An eps-embedding g within delta of f, built on the nerve of `cover`.
pub fn eps_embed(
    s: &SampledSpace,
    f: &Observable,
    eps: f64,
    delta: f64,
    cover: &Cover,
    seed: u64,
) -> Result<EpsEmbedding> {
    let n = s.len();
    let m = f.m;
    let ord = order(cover)?;
    if 2 * ord >= m {
        return Err(Error::PreconditionFailed(format!("cover order {ord} is not below m/2 = {}", m as f64 / 2.0)));
    }
    let mesh_v = mesh(cover, s)?;
    if mesh_v > eps + TAU_CMP {
        return Err(Error::PreconditionFailed(format!("cover mesh {mesh_v} exceeds eps {eps}")));
    }
    let fv = f.evaluate(s)?;
    for x in 0..n {
        for y in x + 1..n {
            if s.dist.get(x, y) < eps && sup_dist(&fv[x], &fv[y]) >= delta {
                return Err(Error::PreconditionFailed(format!(
                    "points {x}, {y} are closer than eps but f differs by at least delta"
                )));
            }
        }
    }
    let pou = partition_of_unity(cover, s, None)?;
    let spread = cover
        .sets
        .iter()
        .zip(&pou.anchors)
        .flat_map(|(w, &q)| w.iter().map(|&z| sup_dist(&fv[z], &fv[q])).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    if spread >= delta {
        return Err(Error::PreconditionFailed(format!("f varies by {spread} inside a cover set, not below delta")));
    }
    let rho = (delta - spread) / 2.0;
    let supports: Vec<Vec<usize>> = (0..n).map(|z| pou.support_at(z)).collect();
    let mut unions = BTreeSet::new();
    for x in 0..n {
        for y in x + 1..n {
            if s.dist.get(x, y) >= eps {
                let mut u: Vec<usize> = supports[x].iter().chain(&supports[y]).copied().collect();
                u.sort_unstable();
                u.dedup();
                unions.insert(u);
            }
        }
    }
    let mut attempt_seeds = Vec::new();
    for attempt in 0..=GP_RETRIES {
        // Attempt 0 keeps v_W = f(q_W) and is accepted only if already generic.
        let aseed = rng::child_seed(seed, "eps-embed", attempt as u64);
        attempt_seeds.push(aseed);
        let mut g = rng::stream(aseed, "vertices", 0);
        let vertices: Vec<Vec<f64>> = pou
            .anchors
            .iter()
            .map(|&q| {
                fv[q]
                    .iter()
                    .map(|&c| if attempt == 0 { c } else { reflect(c + g.gen_range(-rho..rho)) })
                    .collect()
            })
            .collect();
        let generic = unions.iter().all(|u| {
            let fam = VectorFamily { dim: m, vectors: u.iter().map(|&w| vertices[w].clone()).collect() };
            affinely_independent(&fam, TOL_RANK)
        });
        if !generic {
            continue;
        }
        let gv: Vec<Vec<f64>> = (0..n).map(|z| pou.combine(z, &vertices)).collect();
        let (dev, margin, equal, witness) = scan_eps_embedding(s, &fv, &gv, eps);
        if dev < delta && equal == 0 {
            let g = Observable {
                family: Family::PouAffine { weights: pou.weights.clone(), vertex_values: vertices },
                m,
                seed: aseed,
            };
            let report = EpsEmbedReport {
                eps,
                delta,
                sup_deviation: dev,
                eps_margin: margin,
                tau_eq: TAU_EQ,
                equal_pairs: equal,
                witness,
                certified_supports: unions.len(),
                attempt_seeds,
                rho,
            };
            return Ok(EpsEmbedding { g, report });
        }
    }
    Err(Error::GeneralPositionExhausted(GP_RETRIES))
}

/// Extension of values given on `b` to the whole sample, within eps of f_tilde.
pub fn tietze_extend(
    s: &SampledSpace,
    b: &[usize],
    f_on_b: &[Vec<f64>],
    f_tilde: &Observable,
    eps: f64,
) -> Result<Observable> {
    let n = s.len();
    if b.len() != f_on_b.len() {
        return Err(Error::InvalidInput("one value per point of B is required".into()));
    }
    if let Some(&bad) = b.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!("index {bad} out of range")));
    }
    let ft = f_tilde.evaluate(s)?;
    let mut in_b: Vec<Option<usize>> = vec![None; n];
    let mut offsets = Vec::with_capacity(b.len());
    for (j, (&i, v)) in b.iter().zip(f_on_b).enumerate() {
        if v.len() != f_tilde.m {
            return Err(Error::InvalidInput("value dimension differs from m".into()));
        }
        let dev = sup_dist(v, &ft[i]);
        if dev >= eps {
            return Err(Error::PreconditionFailed(format!("value at {i} deviates by {dev}, not below eps")));
        }
        in_b[i] = Some(j);
        offsets.push(v.iter().zip(&ft[i]).map(|(a, c)| a - c).collect::<Vec<f64>>());
    }
    let reach = s.dist.diameter() / 4.0;
    let values = (0..n)
        .map(|z| {
            if let Some(j) = in_b[z] {
                return f_on_b[j].clone();
            }
            if b.is_empty() || reach <= 0.0 {
                return ft[z].clone();
            }
            let dz = b.iter().map(|&i| s.dist.get(z, i)).fold(f64::INFINITY, f64::min);
            let theta = (1.0 - dz / reach).max(0.0);
            if theta == 0.0 {
                return ft[z].clone();
            }
            let mut acc = vec![0.0; f_tilde.m];
            let mut total = 0.0;
            for (&i, o) in b.iter().zip(&offsets) {
                let w = 1.0 / s.dist.get(z, i).powi(2);
                total += w;
                for (a, x) in acc.iter_mut().zip(o) {
                    *a += w * x;
                }
            }
            ft[z].iter().zip(&acc).map(|(c, a)| (c + theta * a / total).clamp(0.0, 1.0)).collect()
        })
        .collect();
    Ok(Observable { family: Family::Table { values }, m: f_tilde.m, seed: f_tilde.seed })
}
