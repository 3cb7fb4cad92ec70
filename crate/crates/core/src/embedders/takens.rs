use rand::Rng;
use serde::{Deserialize, Serialize};

use super::delay::{delay_from_table, repeat_block, DelayVector, TAU_EQ};
use super::embed::{reflect, tietze_extend, GP_RETRIES};
use super::observable::{sup_dist, Observable};
use crate::covers::{order, partition_of_unity, widim, Cover, PartitionOfUnity, WidimMode, WidimOptions, TAU_POU};
use crate::error::{Error, Result};
use crate::rng;
use crate::systems::{period_table, DistMatrix, GroupElement, SampledAction, SampledSpace};

/// Closed regions of one local construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case")]
pub enum Regions {
    /// Disjoint orbits: neighbourhoods of x and y.
    A { ux: Vec<usize>, uy: Vec<usize> },
    /// Periodic x with y = T^l x.
    B { u: Vec<usize>, l: u64 },
    /// Aperiodic x with y = T^l x, l > 0.
    C { u: Vec<usize>, l: u64 },
}

impl Regions {
    pub fn name(&self) -> &'static str {
        match self {
            Regions::A { .. } => "A",
            Regions::B { .. } => "B",
            Regions::C { .. } => "C",
        }
    }
}

/// One region with its cover and local map F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPiece {
    /// Sample indices of the closed region, sorted.
    pub region: Vec<usize>,
    /// Number of blocks of F.
    pub window: usize,
    /// Cover of the region in region-local indices.
    pub cover: Cover,
    /// Anchors q_W as sample indices.
    pub anchors: Vec<usize>,
    /// (f~(T^k q_W))_k for each W.
    pub targets: Vec<Vec<f64>>,
    /// F(q_W) for each W.
    pub vertices: Vec<Vec<f64>>,
    /// F(z) for each region point, in region order.
    pub values: Vec<DelayVector>,
    pub order: usize,
    pub order_bound: f64,
    pub perturbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakensVerification {
    /// max_W ||F(q_W) - v~_W||, below eps/2.
    pub anchor_deviation: f64,
    /// F(z) is a convex combination of F(q_W) over the sets containing z.
    pub hull_ok: bool,
    pub pairs_checked: usize,
    pub pairs_separated: usize,
    /// Smallest separating distance over the checked pairs.
    pub min_separation: f64,
    /// max_{W, z in W, k} ||F(q_W)|_k - f~(T^k z)||.
    pub chain_max: f64,
    /// ||f' - f~|| on the tower union.
    pub f_prime_deviation: f64,
    pub attempt_seeds: Vec<u64>,
}

impl TakensVerification {
    pub fn holds(&self, eps: f64) -> bool {
        self.anchor_deviation < eps / 2.0
            && self.hull_ok
            && self.pairs_separated == self.pairs_checked
            && self.chain_max < eps
            && self.f_prime_deviation < eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakensConstruction {
    pub regions: Regions,
    pub d: u32,
    pub eps: f64,
    pub pieces: Vec<LocalPiece>,
    /// f' on the union of the T^k-images of the regions, sorted by index.
    pub f_prime: Vec<(usize, Vec<f64>)>,
    pub verification: TakensVerification,
}

/// Separation of the extended delay map on K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkReport {
    pub pairs: usize,
    pub separated: usize,
    pub min_separation: f64,
    pub deviation: f64,
    pub witness: Option<(usize, usize)>,
}

fn sub_space(s: &SampledSpace, region: &[usize]) -> SampledSpace {
    let dist = DistMatrix::from_fn(region.len(), |i, j| s.dist.get(region[i], region[j]));
    SampledSpace {
        labels: region.iter().map(|&i| s.labels[i].clone()).collect(),
        coords: None,
        dist,
        declared_dim: s.declared_dim,
    }
}

fn normalise(region: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut r = region.to_vec();
    r.sort_unstable();
    r.dedup();
    if r.is_empty() {
        return Err(Error::InvalidInput("empty region".into()));
    }
    if let Some(&bad) = r.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!("region index {bad} out of range")));
    }
    Ok(r)
}

/// Largest diameter of f~(T^k W) over k < window.
fn image_spread(set: &[usize], iter: &[Vec<usize>], ft: &[Vec<f64>], window: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for img in iter.iter().take(window) {
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                worst = worst.max(sup_dist(&ft[img[i]], &ft[img[j]]));
            }
        }
    }
    worst
}

/// Coarsest greedy cover of the region whose sets keep every f~(T^k W)
/// below eps/2 in diameter; singletons when nothing coarser works.
fn default_cover(sub: &SampledSpace, region: &[usize], iter: &[Vec<usize>], ft: &[Vec<f64>], window: usize, eps: f64, seed: u64) -> Result<Cover> {
    let n = region.len();
    let global = |w: &[usize]| w.iter().map(|&i| region[i]).collect::<Vec<_>>();
    let whole: Vec<usize> = (0..n).collect();
    if image_spread(&global(&whole), iter, ft, window) < eps / 2.0 {
        return Cover::new(vec![whole], n);
    }
    let lam = sub.resolution();
    let mut scale = sub.dist.diameter() / 2.0;
    let opts = WidimOptions { seed, search_steps: 20_000, ..WidimOptions::default() };
    while scale >= 2.0 * lam {
        let res = match widim(sub, scale, lam, WidimMode::Greedy, &opts) {
            Ok(r) => r,
            Err(Error::Infeasible(_)) => break,
            Err(e) => return Err(e),
        };
        if res.cover.sets.iter().all(|w| image_spread(&global(w), iter, ft, window) < eps / 2.0) {
            return Ok(res.cover);
        }
        scale /= 2.0;
    }
    Cover::new((0..n).map(|i| vec![i]).collect(), n)
}

fn disjoint_iterates(families: &[(&[usize], usize)], iter: &[Vec<usize>], n: usize) -> Result<()> {
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; n];
    for (r, &(region, window)) in families.iter().enumerate() {
        for (k, img) in iter.iter().enumerate().take(window) {
            for &z in region {
                let p = img[z];
                if let Some((r0, k0)) = owner[p] {
                    if (r0, k0) != (r, k) {
                        return Err(Error::RegionOverlap(format!(
                            "point {p} lies in T^{k0} of region {r0} and T^{k} of region {r}"
                        )));
                    }
                }
                owner[p] = Some((r, k));
            }
        }
    }
    Ok(())
}

fn hull_ok(pou: &PartitionOfUnity, cover: &Cover) -> bool {
    let n = pou.weights.first().map_or(0, |w| w.len());
    let members = cover.memberships(n);
    (0..n).all(|z| {
        let total: f64 = pou.weights.iter().map(|w| w[z]).sum();
        (total - 1.0).abs() <= TAU_POU
            && pou.weights.iter().enumerate().all(|(w, row)| row[z] >= 0.0 && (row[z] == 0.0 || members[z].contains(&w)))
    })
}

struct Prepared {
    region: Vec<usize>,
    window: usize,
    cover: Cover,
    pou: PartitionOfUnity,
    anchors: Vec<usize>,
    targets: Vec<Vec<f64>>,
    order: usize,
    bound: f64,
    perturbed: bool,
}

/// Local map F of one case, its verification and the assembled f'.
pub fn takens_local_construct(
    a: &SampledAction,
    regions: &Regions,
    d: u32,
    f_tilde: &Observable,
    eps: f64,
    covers: Option<&[Cover]>,
    seed: u64,
) -> Result<TakensConstruction> {
    if a.k() != 1 {
        return Err(Error::InvalidInput("local constructions need a Z action".into()));
    }
    let n = a.len();
    let m = f_tilde.m;
    let ft = f_tilde.evaluate(&a.space)?;
    let periods = period_table(a, n as u64, d as u64);
    let cap = 2 * d as usize + 1;
    let uniform = |region: &[usize]| -> Result<Option<u64>> {
        let p = periods.period(region[0]);
        if region.iter().any(|&z| periods.period(z) != p) {
            return Err(Error::PreconditionFailed("points of a region have different periods".into()));
        }
        Ok(p)
    };
    let adjusted = |p: Option<u64>| p.map_or(cap, |p| (p as usize).min(cap));

    // (region, window, order bound, perturbed), with the larger window first in case A.
    let mut swapped = false;
    let specs: Vec<(Vec<usize>, usize, f64, bool)> = match regions {
        Regions::A { ux, uy } => {
            let ux = normalise(ux, n)?;
            let uy = normalise(uy, n)?;
            let px = adjusted(uniform(&ux)?);
            let py = adjusted(uniform(&uy)?);
            let mut v = vec![
                (ux, px, (px * m) as f64 / 2.0, true),
                (uy, py, (py * m) as f64 / 2.0, false),
            ];
            if px < py {
                v.swap(0, 1);
                v[0].3 = true;
                v[1].3 = false;
                swapped = true;
            }
            v
        }
        Regions::B { u, l } => {
            let u = normalise(u, n)?;
            let p = uniform(&u)?.ok_or_else(|| Error::PreconditionFailed("case B needs a periodic region".into()))?;
            if *l == 0 || *l >= p {
                return Err(Error::PreconditionFailed(format!("shift {l} is not in [1, {}]", p - 1)));
            }
            let pt = adjusted(Some(p));
            vec![(u, p as usize, (pt * m) as f64 / 2.0, true)]
        }
        Regions::C { u, l } => {
            let u = normalise(u, n)?;
            if *l == 0 {
                return Err(Error::PreconditionFailed("case C needs l > 0".into()));
            }
            vec![(u, *l as usize + cap, cap as f64 / 2.0, true)]
        }
    };
    let max_window = specs.iter().map(|s| s.1).max().unwrap_or(1);
    if max_window as u64 > a.horizon as u64 + 1 {
        return Err(Error::HorizonExceeded(vec![max_window as i64 - 1], a.horizon));
    }
    let iter: Vec<Vec<usize>> =
        (0..max_window).map(|k| a.image_table(&GroupElement(vec![k as i64]))).collect::<Result<_>>()?;
    if let Regions::A { ux, uy } = regions {
        let (mut x, mut y) = (ux.clone(), uy.clone());
        x.sort_unstable();
        y.sort_unstable();
        x.dedup();
        y.dedup();
        if x == y {
            return Err(Error::RegionOverlap("the two regions coincide".into()));
        }
    }
    let fams: Vec<(&[usize], usize)> = specs.iter().map(|s| (s.0.as_slice(), s.1)).collect();
    disjoint_iterates(&fams, &iter, n)?;

    let covers = match covers {
        Some(c) if c.len() != specs.len() => {
            return Err(Error::InvalidInput(format!("{} covers supplied for {} regions", c.len(), specs.len())));
        }
        // Covers follow the caller's region order.
        Some(c) if swapped => Some(vec![c[1].clone(), c[0].clone()]),
        Some(c) => Some(c.to_vec()),
        None => None,
    };
    prepare_and_build(a, regions, d, f_tilde, eps, &ft, &iter, &specs, covers, seed)
}

#[allow(clippy::too_many_arguments)]
fn prepare_and_build(
    a: &SampledAction,
    regions: &Regions,
    d: u32,
    f_tilde: &Observable,
    eps: f64,
    ft: &[Vec<f64>],
    iter: &[Vec<usize>],
    specs: &[(Vec<usize>, usize, f64, bool)],
    covers: Option<Vec<Cover>>,
    seed: u64,
) -> Result<TakensConstruction> {
    let m = f_tilde.m;
    let mut prepared = Vec::new();
    for (r, (region, window, bound, perturbed)) in specs.iter().enumerate() {
        let sub = sub_space(&a.space, region);
        let cover = match &covers {
            Some(c) => Cover::new(c[r].sets.clone(), region.len())?,
            None => default_cover(&sub, region, iter, ft, *window, eps, rng::child_seed(seed, "takens-cover", r as u64))?,
        };
        for w in &cover.sets {
            let g: Vec<usize> = w.iter().map(|&i| region[i]).collect();
            let spread = image_spread(&g, iter, ft, *window);
            if spread >= eps / 2.0 {
                return Err(Error::PreconditionFailed(format!("f~ varies by {spread} on an iterate of a cover set")));
            }
        }
        let ord = order(&cover)?;
        if ord as f64 >= *bound {
            return Err(Error::OrderBoundViolated { order: ord, bound: *bound });
        }
        let pou = partition_of_unity(&cover, &sub, None)?;
        let anchors: Vec<usize> = pou.anchors.iter().map(|&q| region[q]).collect();
        let targets: Vec<Vec<f64>> =
            anchors.iter().map(|&q| (0..*window).flat_map(|k| ft[iter[k][q]].clone()).collect()).collect();
        prepared.push(Prepared {
            region: region.clone(),
            window: *window,
            cover,
            pou,
            anchors,
            targets,
            order: ord,
            bound: *bound,
            perturbed: *perturbed,
        });
    }

    let rho = eps / 4.0;
    let mut attempt_seeds = Vec::new();
    let mut last_witness = (0, 0);
    for attempt in 0..GP_RETRIES {
        let aseed = rng::child_seed(seed, "takens", attempt as u64);
        attempt_seeds.push(aseed);
        let mut g = rng::stream(aseed, "vertices", 0);
        let vertices: Vec<Vec<Vec<f64>>> = prepared
            .iter()
            .map(|p| {
                p.targets
                    .iter()
                    .map(|t| t.iter().map(|&c| if p.perturbed { reflect(c + g.gen_range(-rho..rho)) } else { c }).collect())
                    .collect()
            })
            .collect();
        let values: Vec<Vec<DelayVector>> = prepared
            .iter()
            .zip(&vertices)
            .map(|(p, v)| (0..p.region.len()).map(|z| DelayVector { m, data: p.pou.combine(z, v) }).collect())
            .collect();
        let (checked, separated, min_sep, witness) = separation(regions, d, &prepared, &values);
        if separated < checked {
            last_witness = witness.unwrap_or((0, 0));
            continue;
        }
        return Ok(finish(regions, d, eps, ft, iter, prepared, vertices, values, checked, min_sep, attempt_seeds));
    }
    Err(Error::SeparationFailed(last_witness.0, last_witness.1))
}

/// (checked, separated, min separation, first failing pair).
fn separation(
    regions: &Regions,
    d: u32,
    prepared: &[Prepared],
    values: &[Vec<DelayVector>],
) -> (usize, usize, f64, Option<(usize, usize)>) {
    let mut checked = 0;
    let mut separated = 0;
    let mut min_sep = f64::INFINITY;
    let mut witness = None;
    let mut record = |o: f64, x: usize, y: usize| {
        checked += 1;
        min_sep = min_sep.min(o);
        if o > TAU_EQ {
            separated += 1;
        } else {
            witness.get_or_insert((x, y));
        }
    };
    match regions {
        Regions::A { .. } => {
            let (px, py) = (&prepared[0], &prepared[1]);
            for (i, fx) in values[0].iter().enumerate() {
                for (j, fy) in values[1].iter().enumerate() {
                    let rep = repeat_block(fy, px.window);
                    record(sup_dist(&fx.data, &rep.data), px.region[i], py.region[j]);
                }
            }
        }
        Regions::B { l, .. } => {
            let p = &prepared[0];
            let period = p.window;
            let pt = period.min(2 * d as usize + 1);
            for (i, fx) in values[0].iter().enumerate() {
                for (j, fy) in values[0].iter().enumerate() {
                    let o = (0..pt)
                        .map(|b| sup_dist(fx.block(b), fy.block((b + *l as usize) % period)))
                        .fold(0.0, f64::max);
                    record(o, p.region[i], p.region[j]);
                }
            }
        }
        Regions::C { l, .. } => {
            let p = &prepared[0];
            let l = *l as usize;
            let top = 2 * d as usize;
            for (i, fx) in values[0].iter().enumerate() {
                for (j, fy) in values[0].iter().enumerate() {
                    record(sup_dist(fx.slice(0, top), fy.slice(l, l + top)), p.region[i], p.region[j]);
                }
            }
        }
    }
    (checked, separated, min_sep, witness)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    regions: &Regions,
    d: u32,
    eps: f64,
    ft: &[Vec<f64>],
    iter: &[Vec<usize>],
    prepared: Vec<Prepared>,
    vertices: Vec<Vec<Vec<f64>>>,
    values: Vec<Vec<DelayVector>>,
    checked: usize,
    min_sep: f64,
    attempt_seeds: Vec<u64>,
) -> TakensConstruction {
    let m = ft.first().map_or(0, |v| v.len());
    let mut anchor_deviation: f64 = 0.0;
    let mut chain_max: f64 = 0.0;
    let mut hull = true;
    let mut f_prime = Vec::new();
    for ((p, verts), vals) in prepared.iter().zip(&vertices).zip(&values) {
        hull &= hull_ok(&p.pou, &p.cover);
        for (w, set) in p.cover.sets.iter().enumerate() {
            let q_local = p.region.binary_search(&p.anchors[w]).expect("anchor lies in its region");
            anchor_deviation = anchor_deviation.max(sup_dist(&vals[q_local].data, &p.targets[w]));
            for &zl in set {
                let z = p.region[zl];
                for k in 0..p.window {
                    chain_max = chain_max.max(sup_dist(&verts[w][k * m..(k + 1) * m], &ft[iter[k][z]]));
                }
            }
        }
        for (zl, &z) in p.region.iter().enumerate() {
            for (k, it) in iter.iter().enumerate().take(p.window) {
                f_prime.push((it[z], vals[zl].block(k).to_vec()));
            }
        }
    }
    f_prime.sort_by_key(|e| e.0);
    let f_prime_deviation = f_prime.iter().map(|(i, v)| sup_dist(v, &ft[*i])).fold(0.0, f64::max);
    let pieces = prepared
        .into_iter()
        .zip(vertices)
        .zip(values)
        .map(|((p, v), vals)| LocalPiece {
            region: p.region,
            window: p.window,
            cover: p.cover,
            anchors: p.anchors,
            targets: p.targets,
            vertices: v,
            values: vals,
            order: p.order,
            order_bound: p.bound,
            perturbed: p.perturbed,
        })
        .collect();
    TakensConstruction {
        regions: regions.clone(),
        d,
        eps,
        pieces,
        f_prime,
        verification: TakensVerification {
            anchor_deviation,
            hull_ok: hull,
            pairs_checked: checked,
            pairs_separated: checked,
            min_separation: min_sep,
            chain_max,
            f_prime_deviation,
            attempt_seeds,
        },
    }
}

/// Extends f' to the whole sample and checks that the delay map of the
/// extension separates every pair of K.
pub fn extend_and_check(a: &SampledAction, c: &TakensConstruction, f_tilde: &Observable) -> Result<(Observable, DkReport)> {
    let (b, vals): (Vec<usize>, Vec<Vec<f64>>) = c.f_prime.iter().cloned().unzip();
    let f = tietze_extend(&a.space, &b, &vals, f_tilde, c.eps)?;
    let fv = f.evaluate(&a.space)?;
    let ftv = f_tilde.evaluate(&a.space)?;
    let deviation = fv.iter().zip(&ftv).map(|(x, y)| sup_dist(x, y)).fold(0.0, f64::max);
    let delay = delay_from_table(a, &fv, f.m, c.d)?;
    let (xs, ys): (Vec<usize>, Vec<usize>) = match &c.regions {
        Regions::A { .. } => (c.pieces[0].region.clone(), c.pieces[1].region.clone()),
        Regions::B { l, .. } | Regions::C { l, .. } => {
            let shift = a.image_table(&GroupElement(vec![*l as i64]))?;
            let u = c.pieces[0].region.clone();
            let ty = u.iter().map(|&z| shift[z]).collect();
            (u, ty)
        }
    };
    let mut rep = DkReport { pairs: 0, separated: 0, min_separation: f64::INFINITY, deviation, witness: None };
    for &x in &xs {
        for &y in &ys {
            let o = sup_dist(&delay[x].data, &delay[y].data);
            rep.pairs += 1;
            rep.min_separation = rep.min_separation.min(o);
            if o > TAU_EQ {
                rep.separated += 1;
            } else {
                rep.witness.get_or_insert((x, y));
            }
        }
    }
    Ok((f, rep))
}
