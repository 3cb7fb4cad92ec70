//! Rokhlin towers on sampled actions and the embedding pipeline through them.

use serde::{Deserialize, Serialize};

use crate::covers::{widim, WidimMode, WidimOptions, TAU_CMP};
use crate::embedders::{eps_embed, sup_dist, tietze_extend, EpsEmbedReport, Family, Observable, TAU_EQ};
use crate::error::{Error, Result};
use crate::rng;
use crate::systems::{circle_rotation, dynamical_metric, GroupElement, SampledAction, SampledSpace};

pub const TOWER_SCHEMA: &str = "meandim.towers/1";

/// D + 1 bases whose [n]^k-translates form the towers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerSystem {
    /// Number of towers minus one.
    pub d: usize,
    pub n: u32,
    pub k: usize,
    /// Size of the sample the bases index.
    pub points: usize,
    pub bases: Vec<Vec<usize>>,
    /// Closures are the margin-neighbourhoods of the bases.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TowerViolation {
    Horizon { n: u32, horizon: u32 },
    Shape { reason: String },
    Overlap { tower: usize, g: Vec<i64>, g_prime: Vec<i64>, point: usize },
    Uncovered { point: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerVerdict {
    pub valid: bool,
    /// Points lying in two distinct translates of one closed base.
    pub overlaps: usize,
    pub uncovered: usize,
    pub witness: Option<TowerViolation>,
}

/// Points within `margin` of `set`.
pub fn closure_of(set: &[usize], s: &SampledSpace, margin: f64) -> Vec<usize> {
    let lim = margin * (1.0 + 1e-9);
    (0..s.len()).filter(|&z| set.iter().any(|&u| s.dist.get(z, u) <= lim)).collect()
}

/// Exhaustive check of within-tower disjointness of closed translates and of
/// the covering property.
pub fn verify_towers(t: &TowerSystem, a: &SampledAction) -> TowerVerdict {
    let fail = |w: TowerViolation| TowerVerdict { valid: false, overlaps: 0, uncovered: 0, witness: Some(w) };
    if t.n > a.horizon {
        return fail(TowerViolation::Horizon { n: t.n, horizon: a.horizon });
    }
    let n = a.len();
    if t.k != a.k() || t.points != n || t.bases.len() != t.d + 1 || t.bases.iter().flatten().any(|&u| u >= n) {
        return fail(TowerViolation::Shape { reason: "tower system does not match the action".into() });
    }
    let elems = GroupElement::box_elements(a.k(), t.n);
    let images = match a.box_images(t.n) {
        Ok(i) => i,
        Err(e) => return fail(TowerViolation::Shape { reason: e.to_string() }),
    };
    let mut covered = vec![false; n];
    let mut overlaps = 0;
    let mut witness = None;
    for (i, base) in t.bases.iter().enumerate() {
        let cl = closure_of(base, &a.space, t.margin);
        let mut owner: Vec<Option<usize>> = vec![None; n];
        let mut bad = vec![false; n];
        for (gi, img) in images.iter().enumerate() {
            for &u in base {
                covered[img[u]] = true;
            }
            for &z in &cl {
                let p = img[z];
                match owner[p] {
                    None => owner[p] = Some(gi),
                    Some(o) if o != gi => {
                        if !bad[p] {
                            bad[p] = true;
                            overlaps += 1;
                        }
                        witness.get_or_insert(TowerViolation::Overlap {
                            tower: i,
                            g: elems[o].0.clone(),
                            g_prime: elems[gi].0.clone(),
                            point: p,
                        });
                    }
                    _ => {}
                }
            }
        }
    }
    let missing: Vec<usize> = (0..n).filter(|&z| !covered[z]).collect();
    if let Some(&p) = missing.first() {
        witness.get_or_insert(TowerViolation::Uncovered { point: p });
    }
    TowerVerdict { valid: overlaps == 0 && missing.is_empty(), overlaps, uncovered: missing.len(), witness }
}

/// Continued-fraction convergents p/q of alpha with q <= q_max.
pub fn convergents(alpha: f64, q_max: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut x = alpha;
    for _ in 0..64 {
        let a = x.floor();
        let (p, q) = (a as i64 * p1 + p0, a as i64 * q1 + q0);
        if q > q_max {
            break;
        }
        out.push((p, q));
        (p0, q0, p1, q1) = (p1, q1, p, q);
        let frac = x - a;
        if frac.abs() < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    out
}

/// A convergent matching alpha to `tol`, if any.
pub fn rational_witness(alpha: f64, q_max: i64, tol: f64) -> Option<(i64, i64)> {
    convergents(alpha, q_max).into_iter().find(|&(p, q)| (alpha - p as f64 / q as f64).abs() <= tol)
}

pub const RATIONAL_Q_MAX: i64 = 10_000;
pub const RATIONAL_TOL: f64 = 1e-12;

/// Tries to add base point v: every closed translate must land on points
/// owned by no other translate.
fn try_add(owner: &mut [Option<usize>], images: &[Vec<usize>], nbhd: &[usize]) -> bool {
    for (g, img) in images.iter().enumerate() {
        for &z in nbhd {
            if matches!(owner[img[z]], Some(o) if o != g) {
                return false;
            }
        }
    }
    for (g, img) in images.iter().enumerate() {
        for &z in nbhd {
            owner[img[z]] = Some(g);
        }
    }
    true
}

/// Two height-n towers for the rotation by alpha on a `resolution`-point
/// circle, closures fattened by the default margin.
pub fn build_circle_towers(alpha: f64, n: u32, resolution: usize) -> Result<(SampledAction, TowerSystem)> {
    build_circle_towers_with_margin(alpha, n, resolution, DEFAULT_MARGIN_STEPS)
}

/// Closure margin in units of the sample resolution.
pub const DEFAULT_MARGIN_STEPS: f64 = 2.0;

/// Tower 0 stacks bottom-aligned blocks of the first-return castle over the
/// arc [0, ||q alpha||) for a convergent q whose return times are all >= n;
/// tower 1 takes one block over each column top, at offsets searched
/// exhaustively, then orbit-walk blocks for the rest. If no convergent
/// works, a complete depth-first search over block placements decides.
pub fn build_circle_towers_with_margin(
    alpha: f64,
    n: u32,
    resolution: usize,
    margin_steps: f64,
) -> Result<(SampledAction, TowerSystem)> {
    if n == 0 {
        return Err(Error::InvalidInput("tower height must be at least 1".into()));
    }
    if let Some((p, q)) = rational_witness(alpha.rem_euclid(1.0), RATIONAL_Q_MAX, RATIONAL_TOL) {
        return Err(Error::RationalAlpha(p, q));
    }
    let a = circle_rotation(alpha, resolution)?;
    let big_n = a.len();
    let margin = margin_steps * a.space.resolution();
    if n == 1 {
        let half = big_n / 2;
        let bases = vec![(0..half.max(1)).collect(), (half.max(1)..big_n).collect()];
        return Ok((a, TowerSystem { d: 1, n, k: 1, points: big_n, bases, margin }));
    }
    if (n as usize) > big_n {
        return Err(Error::ResolutionTooCoarse(format!("{big_n} points cannot carry towers of height {n}")));
    }
    let map = &a.generators[0].map;
    let inv = a.generators[0].inverse.as_ref().ok_or(Error::NotInvertible(0))?;
    let shift = map[0];
    let images = a.box_images(n)?;
    let lim = margin * (1.0 + 1e-9);
    let nbhds: Vec<Vec<usize>> =
        (0..big_n).map(|v| (0..big_n).filter(|&z| a.space.dist.get(z, v) <= lim).collect()).collect();
    let nn = n as usize;
    for (_, q) in convergents(alpha.rem_euclid(1.0), RATIONAL_Q_MAX) {
        let r = (q as usize * shift) % big_n;
        let arc_len = r.min(big_n - r);
        if arc_len == 0 {
            continue;
        }
        let castle: Vec<(usize, usize)> = (0..arc_len)
            .map(|x| {
                let mut ret = 1;
                let mut y = map[x];
                while y >= arc_len {
                    y = map[y];
                    ret += 1;
                }
                (x, ret)
            })
            .collect();
        if castle.iter().any(|&(_, h)| h < nn) {
            continue;
        }
        let mut heights: Vec<usize> = castle.iter().map(|&(_, h)| h).collect();
        heights.sort_unstable();
        heights.dedup();
        // Offsets of the second-tower block that covers each column's top.
        let choices: Vec<Vec<usize>> = heights
            .iter()
            .map(|&h| {
                let rem = h % nn;
                if rem == 0 {
                    vec![h]
                } else {
                    (h - nn..=h - rem).rev().collect()
                }
            })
            .collect();
        let combos: usize = choices.iter().map(|c| c.len()).product();
        for combo in 0..combos.min(MAX_OFFSET_COMBOS) {
            let mut c = combo;
            let offsets: Vec<usize> = choices
                .iter()
                .map(|ch| {
                    let o = ch[c % ch.len()];
                    c /= ch.len();
                    o
                })
                .collect();
            if let Some(bases) = castle_towers(&castle, &heights, &offsets, map, inv, nn, &images, &nbhds) {
                return Ok((a, TowerSystem { d: 1, n, k: 1, points: big_n, bases, margin }));
            }
        }
    }
    if let Some(bases) = search_towers(map, inv, nn, &images, &nbhds, SEARCH_NODE_CAP) {
        return Ok((a, TowerSystem { d: 1, n, k: 1, points: big_n, bases, margin }));
    }
    Err(Error::ResolutionTooCoarse(format!(
        "neither the castle nor an exhaustive search yields two height-{n} towers on {big_n} points"
    )))
}

const SEARCH_NODE_CAP: u64 = 2_000_000;

struct Search<'a> {
    images: &'a [Vec<usize>],
    nbhds: &'a [Vec<usize>],
    inv: &'a [usize],
    n: usize,
    order: Vec<usize>,
    owner: [Vec<Option<usize>>; 2],
    cover: Vec<u32>,
    bases: [Vec<usize>; 2],
    nodes: u64,
    cap: u64,
}

impl Search<'_> {
    fn place(&mut self, t: usize, v: usize) -> Option<Vec<usize>> {
        for (g, img) in self.images.iter().enumerate() {
            for &z in &self.nbhds[v] {
                if matches!(self.owner[t][img[z]], Some(o) if o != g) {
                    return None;
                }
            }
        }
        let mut set = Vec::new();
        for (g, img) in self.images.iter().enumerate() {
            for &z in &self.nbhds[v] {
                let p = img[z];
                if self.owner[t][p].is_none() {
                    self.owner[t][p] = Some(g);
                    set.push(p);
                }
            }
            self.cover[img[v]] += 1;
        }
        self.bases[t].push(v);
        Some(set)
    }

    fn undo(&mut self, t: usize, v: usize, set: Vec<usize>) {
        for p in set {
            self.owner[t][p] = None;
        }
        for img in self.images {
            self.cover[img[v]] -= 1;
        }
        self.bases[t].pop();
    }

    fn run(&mut self, from: usize) -> bool {
        let Some(pos) = (from..self.order.len()).find(|&i| self.cover[self.order[i]] == 0) else {
            return true;
        };
        let x = self.order[pos];
        for t in 0..2 {
            let mut v = x;
            for _ in 0..self.n {
                self.nodes += 1;
                if self.nodes > self.cap {
                    return false;
                }
                if let Some(set) = self.place(t, v) {
                    if self.run(pos + 1) {
                        return true;
                    }
                    self.undo(t, v, set);
                }
                v = self.inv[v];
            }
        }
        false
    }
}

/// Depth-first search over block placements, visiting points in orbit order.
fn search_towers(
    map: &[usize],
    inv: &[usize],
    n: usize,
    images: &[Vec<usize>],
    nbhds: &[Vec<usize>],
    cap: u64,
) -> Option<Vec<Vec<usize>>> {
    let big_n = map.len();
    let mut order = Vec::with_capacity(big_n);
    let mut seen = vec![false; big_n];
    for start in 0..big_n {
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            order.push(x);
            x = map[x];
        }
    }
    let mut s = Search {
        images,
        nbhds,
        inv,
        n,
        order,
        owner: [vec![None; big_n], vec![None; big_n]],
        cover: vec![0; big_n],
        bases: [Vec::new(), Vec::new()],
        nodes: 0,
        cap,
    };
    if !s.run(0) {
        return None;
    }
    let [mut b0, mut b1] = s.bases;
    b0.sort_unstable();
    b1.sort_unstable();
    Some(vec![b0, b1])
}

const MAX_OFFSET_COMBOS: usize = 4096;

fn advance(map: &[usize], x: usize, steps: usize) -> usize {
    (0..steps).fold(x, |y, _| map[y])
}

/// Tower 0: bottom-aligned blocks in every column. Tower 1: one block per
/// column at the given offset, then orbit-walk blocks for whatever is left.
#[allow(clippy::too_many_arguments)]
fn castle_towers(
    castle: &[(usize, usize)],
    heights: &[usize],
    offsets: &[usize],
    map: &[usize],
    inv: &[usize],
    n: usize,
    images: &[Vec<usize>],
    nbhds: &[Vec<usize>],
) -> Option<Vec<Vec<usize>>> {
    let big_n = map.len();
    let mut owner0 = vec![None; big_n];
    let mut base0 = Vec::new();
    for &(x, h) in castle {
        let mut v = x;
        for _ in 0..h / n {
            if try_add(&mut owner0, images, &nbhds[v]) {
                base0.push(v);
            }
            v = advance(map, v, n);
        }
    }
    let mut covered = vec![false; big_n];
    for img in images {
        for &u in &base0 {
            covered[img[u]] = true;
        }
    }
    let mut owner1 = vec![None; big_n];
    let mut base1 = Vec::new();
    for &(x, h) in castle {
        let col = heights.binary_search(&h).expect("height listed");
        if h % n == 0 {
            continue;
        }
        let v = advance(map, x, offsets[col]);
        if try_add(&mut owner1, images, &nbhds[v]) {
            base1.push(v);
            for img in images {
                covered[img[v]] = true;
            }
        }
    }
    let mut visited = vec![false; big_n];
    for start in 0..big_n {
        let mut x = start;
        while !visited[x] {
            visited[x] = true;
            if !covered[x] {
                let mut v = x;
                let mut placed = false;
                for _ in 0..n {
                    if try_add(&mut owner1, images, &nbhds[v]) {
                        placed = true;
                        break;
                    }
                    v = inv[v];
                }
                if !placed {
                    return None;
                }
                base1.push(v);
                for img in images {
                    covered[img[v]] = true;
                }
            }
            x = map[x];
        }
    }
    base0.sort_unstable();
    base1.sort_unstable();
    Some(vec![base0, base1])
}

/// Product bases U^(1)_{m_1} x .. x U^(k)_{m_k} on the product grid, indexed
/// row-major with the first factor slowest; tower index reads m as binary.
pub fn product_towers(parts: &[TowerSystem], n: u32) -> Result<TowerSystem> {
    if parts.is_empty() {
        return Err(Error::InvalidInput("no tower systems to multiply".into()));
    }
    if let Some(p) = parts.iter().find(|p| p.n != n) {
        return Err(Error::HeightMismatch(p.n, n));
    }
    if parts.iter().any(|p| p.d != 1 || p.k != 1) {
        return Err(Error::InvalidInput("product parts must be two-tower systems of Z actions".into()));
    }
    if parts.len() == 1 {
        return Ok(parts[0].clone());
    }
    let k = parts.len();
    let mut bases = Vec::with_capacity(1 << k);
    for m in 0..(1usize << k) {
        let mut set: Vec<usize> = vec![0];
        for (axis, p) in parts.iter().enumerate() {
            let bit = (m >> (k - 1 - axis)) & 1;
            set = set.iter().flat_map(|&prefix| p.bases[bit].iter().map(move |&u| prefix * p.points + u)).collect();
        }
        set.sort_unstable();
        bases.push(set);
    }
    Ok(TowerSystem {
        d: (1 << k) - 1,
        n,
        k,
        points: parts.iter().map(|p| p.points).product(),
        bases,
        margin: parts.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min),
    })
}

/// Equivariant surjection from a total sample onto a base sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorMap {
    pub map: Vec<usize>,
}

impl FactorMap {
    pub fn identity(n: usize) -> Self {
        FactorMap { map: (0..n).collect() }
    }

    /// Checks pi(g x) = g pi(x) for every generator and surjectivity.
    pub fn check(&self, total: &SampledAction, base: &SampledAction) -> Result<()> {
        if self.map.len() != total.len() || self.map.iter().any(|&y| y >= base.len()) {
            return Err(Error::InvalidInput("factor map does not match the samples".into()));
        }
        if total.k() != base.k() {
            return Err(Error::InvalidInput("total and base actions have different k".into()));
        }
        for (axis, (gt, gb)) in total.generators.iter().zip(&base.generators).enumerate() {
            if let Some(x) = (0..total.len()).find(|&x| self.map[gt.map[x]] != gb.map[self.map[x]]) {
                return Err(Error::NotEquivariant(x, axis));
            }
        }
        let mut hit = vec![false; base.len()];
        for &y in &self.map {
            hit[y] = true;
        }
        if let Some(y) = hit.iter().position(|&h| !h) {
            return Err(Error::InvalidInput(format!("factor map misses base point {y}")));
        }
        Ok(())
    }
}

/// V_i^v = pi^-1(v U_i) with the closed versions pi^-1(v cl U_i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackCover {
    pub n: u32,
    /// Box elements v in row-major order.
    pub elements: Vec<Vec<i64>>,
    /// sets[i][v]
    pub sets: Vec<Vec<Vec<usize>>>,
    /// closed[i][v]
    pub closed: Vec<Vec<Vec<usize>>>,
    /// W_i, the union of the closed sets of tower i.
    pub w: Vec<Vec<usize>>,
}

impl PullbackCover {
    pub fn covers(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for s in self.sets.iter().flatten().flatten() {
            seen[*s] = true;
        }
        seen.into_iter().all(|b| b)
    }
}

pub fn pullback(t: &TowerSystem, pi: &FactorMap, total: &SampledAction, base: &SampledAction) -> Result<PullbackCover> {
    pi.check(total, base)?;
    let elems = GroupElement::box_elements(base.k(), t.n);
    let images = base.box_images(t.n)?;
    let mut sets = Vec::new();
    let mut closed = Vec::new();
    let mut w = Vec::new();
    for u in &t.bases {
        let cl = closure_of(u, &base.space, t.margin);
        let mut si = Vec::new();
        let mut ci = Vec::new();
        let mut wi = vec![false; total.len()];
        for img in &images {
            let mut open_mask = vec![false; base.len()];
            let mut closed_mask = vec![false; base.len()];
            for &y in u {
                open_mask[img[y]] = true;
            }
            for &y in &cl {
                closed_mask[img[y]] = true;
            }
            si.push((0..total.len()).filter(|&x| open_mask[pi.map[x]]).collect());
            let c: Vec<usize> = (0..total.len()).filter(|&x| closed_mask[pi.map[x]]).collect();
            for &x in &c {
                wi[x] = true;
            }
            ci.push(c);
        }
        sets.push(si);
        closed.push(ci);
        w.push((0..total.len()).filter(|&x| wi[x]).collect());
    }
    Ok(PullbackCover { n: t.n, elements: elems.into_iter().map(|g| g.0).collect(), sets, closed, w })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub l: usize,
    pub eps: f64,
    pub delta: f64,
    pub eta: f64,
    /// Lebesgue-number regulariser of the widim gate.
    pub lam: f64,
    /// Side of the orbit box on which I_g is compared; defaults to n.
    pub window: Option<u32>,
    pub widim: WidimOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: u32,
    pub window: u32,
    /// Greedy widim_{eps,lam}(X, d_[n]) and the bound L n^k / 2.
    pub widim_order: usize,
    pub widim_bound: f64,
    pub tower_reports: Vec<EpsEmbedReport>,
    /// ||f - g|| over the sample.
    pub sup_deviation: f64,
    /// Exhaustive g_i((w - v) x) = p_w G_i((-v) x) checks and the worst gap.
    pub reassembly_checks: usize,
    pub reassembly_max_gap: f64,
    /// Pairs with pi(x) = pi(y), x != y.
    pub fiber_pairs: usize,
    /// Fiber pairs whose window outputs agree within tau_eq.
    pub equal_window_pairs: usize,
    /// Of those, pairs with d(x, y) >= eta.
    pub violations: usize,
    /// Links d(x, y) <= d_[n]((-v) x, (-v) y) verified for fiber pairs.
    pub chain_links_checked: usize,
    pub chain_links_failed: usize,
    /// Smallest window-output distance over fiber pairs with d >= eta.
    pub fiber_margin: f64,
    /// Smallest base distance over pairs with distinct images and d >= eta.
    pub base_margin: f64,
    pub margin: f64,
    pub eta_injective: bool,
    pub witness: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub g: Observable,
    pub report: PipelineReport,
}

/// g = g_0 x .. x g_D within delta of f with I_g x pi an eta-embedding,
/// following the tower argument on the sample.
pub fn theorem2_pipeline(
    total: &SampledAction,
    base: &SampledAction,
    pi: &FactorMap,
    t: &TowerSystem,
    f: &Observable,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let (l, eps, delta, eta) = (cfg.l, cfg.eps, cfg.delta, cfg.eta);
    if eps > eta {
        return Err(Error::GateFailed(format!("eps {eps} exceeds eta {eta}")));
    }
    if f.m != (t.d + 1) * l {
        return Err(Error::InvalidInput(format!("observable has m = {}, expected (D+1)L = {}", f.m, (t.d + 1) * l)));
    }
    pi.check(total, base)?;
    let verdict = verify_towers(t, base);
    if !verdict.valid {
        return Err(Error::GateFailed(format!("towers invalid: {:?}", verdict.witness)));
    }
    let n = total.len();
    let fv = f.evaluate(&total.space)?;
    let part = |i: usize, x: usize| fv[x][i * l..(i + 1) * l].to_vec();
    for x in 0..n {
        for y in x + 1..n {
            if total.space.dist.get(x, y) < eps {
                for i in 0..=t.d {
                    if sup_dist(&part(i, x), &part(i, y)) >= delta {
                        return Err(Error::GateFailed(format!(
                            "implication gate: d({x},{y}) < eps but f_{i} differs by at least delta"
                        )));
                    }
                }
            }
        }
    }
    let dn = dynamical_metric(total, t.n)?;
    let sn = total.space.with_dist(dn.clone());
    let box_size = GroupElement::box_elements(total.k(), t.n).len();
    let bound = (l * box_size) as f64 / 2.0;
    // A set of diameter exactly eps would let two points at distance eps
    // share all their weights, so the cover is taken strictly inside eps.
    let wres = widim(&sn, eps - 10.0 * TAU_CMP, cfg.lam, WidimMode::Greedy, &cfg.widim)
        .map_err(|e| Error::GateFailed(format!("widim gate: {e}")))?;
    if wres.order as f64 >= bound {
        return Err(Error::GateFailed(format!(
            "widim gate: greedy order {} at eps {eps}, lam {} is not below L n^k / 2 = {bound}",
            wres.order, cfg.lam
        )));
    }
    let elems = GroupElement::box_elements(total.k(), t.n);
    let fwd = total.box_images(t.n)?;
    let back: Vec<Vec<usize>> = elems.iter().map(|g| total.image_table(&-g)).collect::<Result<_>>()?;
    let pb = pullback(t, pi, total, base)?;

    let mut tower_reports = Vec::new();
    let mut g_parts: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut reassembly_checks = 0;
    let mut reassembly_max_gap: f64 = 0.0;
    let mut big_g: Vec<Vec<Vec<f64>>> = Vec::new();
    for i in 0..=t.d {
        let fi: Vec<Vec<f64>> = (0..n).map(|x| fwd.iter().flat_map(|img| part(i, img[x])).collect()).collect();
        let fi_obs = Observable::table(fi)?;
        let emb = eps_embed(&sn, &fi_obs, eps, delta, &wres.cover, rng::child_seed(cfg.seed, "pipeline-tower", i as u64))?;
        let gi = emb.g.evaluate(&sn)?;
        tower_reports.push(emb.report);
        // g_i' on the closed pullback sets.
        let mut label: Vec<Option<usize>> = vec![None; n];
        for (v, set) in pb.closed[i].iter().enumerate() {
            for &x in set {
                if label[x].is_some_and(|o| o != v) {
                    return Err(Error::GateFailed(format!("closed pullback sets of tower {i} overlap at {x}")));
                }
                label[x] = Some(v);
            }
        }
        let domain: Vec<usize> = (0..n).filter(|&x| label[x].is_some()).collect();
        let values: Vec<Vec<f64>> = domain
            .iter()
            .map(|&x| {
                let v = label[x].expect("labelled");
                gi[back[v][x]][v * l..(v + 1) * l].to_vec()
            })
            .collect();
        let fi_tilde = Observable::table((0..n).map(|x| part(i, x)).collect())?;
        let ext = tietze_extend(&total.space, &domain, &values, &fi_tilde, delta)?;
        let gv = ext.evaluate(&total.space)?;
        for &x in &domain {
            let v = label[x].expect("labelled");
            let src = back[v][x];
            for (w, img) in fwd.iter().enumerate() {
                // (w - v) x = w ((-v) x)
                let moved = img[src];
                reassembly_checks += 1;
                reassembly_max_gap = reassembly_max_gap.max(sup_dist(&gv[moved], &gi[src][w * l..(w + 1) * l]));
            }
        }
        g_parts.push(gv);
        big_g.push(gi);
    }
    let g_values: Vec<Vec<f64>> = (0..n).map(|x| g_parts.iter().flat_map(|p| p[x].clone()).collect()).collect();
    let sup_deviation = (0..n).map(|x| sup_dist(&g_values[x], &fv[x])).fold(0.0, f64::max);

    let window = cfg.window.unwrap_or(t.n);
    let wimg = total.box_images(window)?;
    let win: Vec<Vec<f64>> = (0..n).map(|x| wimg.iter().flat_map(|img| g_values[img[x]].clone()).collect()).collect();
    let mut rep = PipelineReport {
        n: t.n,
        window,
        widim_order: wres.order,
        widim_bound: bound,
        tower_reports,
        sup_deviation,
        reassembly_checks,
        reassembly_max_gap,
        fiber_pairs: 0,
        equal_window_pairs: 0,
        violations: 0,
        chain_links_checked: 0,
        chain_links_failed: 0,
        fiber_margin: f64::INFINITY,
        base_margin: f64::INFINITY,
        margin: f64::INFINITY,
        eta_injective: true,
        witness: None,
    };
    for x in 0..n {
        for y in x + 1..n {
            let d = total.space.dist.get(x, y);
            if pi.map[x] != pi.map[y] {
                if d >= eta {
                    rep.base_margin = rep.base_margin.min(base.space.dist.get(pi.map[x], pi.map[y]));
                }
                continue;
            }
            rep.fiber_pairs += 1;
            let o = sup_dist(&win[x], &win[y]);
            if d >= eta {
                rep.fiber_margin = rep.fiber_margin.min(o);
            }
            for i in 0..=t.d {
                for (v, set) in pb.sets[i].iter().enumerate() {
                    if set.binary_search(&x).is_ok() && set.binary_search(&y).is_ok() {
                        rep.chain_links_checked += 1;
                        if d > dn.get(back[v][x], back[v][y]) + 1e-12 {
                            rep.chain_links_failed += 1;
                        }
                    }
                }
            }
            if o <= TAU_EQ {
                rep.equal_window_pairs += 1;
                if d >= eta {
                    rep.violations += 1;
                    rep.witness.get_or_insert((x, y));
                }
            }
        }
    }
    rep.margin = rep.fiber_margin.min(rep.base_margin);
    rep.eta_injective = rep.violations == 0;
    let g = Observable { family: Family::Table { values: g_values }, m: f.m, seed: cfg.seed };
    Ok(PipelineOutcome { g, report: rep })
}
