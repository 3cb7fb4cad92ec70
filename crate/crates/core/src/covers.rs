//! Covers of sampled spaces: mesh, order, Lebesgue number, widim, nerves and
//! partitions of unity.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::systems::SampledSpace;

/// Slack used when comparing sample distances with eps and lambda.
pub const TAU_CMP: f64 = 1e-9;
pub const TAU_POU: f64 = 1e-9;

/// Finite cover of the index set {0..n-1} by nonempty subsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cover {
    pub sets: Vec<Vec<usize>>,
}

impl Cover {
    /// Sorts and deduplicates each set; fails if a set is empty, an index is
    /// out of range or some index is uncovered.
    pub fn new(sets: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut out = Vec::with_capacity(sets.len());
        for mut s in sets {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(Error::InvalidInput("cover contains an empty set".into()));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidInput(format!("cover index {bad} out of range")));
            }
            for &i in &s {
                seen[i] = true;
            }
            out.push(s);
        }
        if let Some(miss) = seen.iter().position(|&b| !b) {
            return Err(Error::NotACover(miss));
        }
        Ok(Cover { sets: out })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Indices of the sets containing each point.
    pub fn memberships(&self, n: usize) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); n];
        for (w, s) in self.sets.iter().enumerate() {
            for &i in s {
                if i < n {
                    m[i].push(w);
                }
            }
        }
        m
    }

    fn check_covers(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for s in &self.sets {
            for &i in s {
                if i >= n {
                    return Err(Error::InvalidInput(format!("cover index {i} out of range")));
                }
                seen[i] = true;
            }
        }
        match seen.iter().position(|&b| !b) {
            Some(i) => Err(Error::NotACover(i)),
            None => Ok(()),
        }
    }

    fn universe(&self) -> usize {
        self.sets.iter().flat_map(|s| s.iter()).max().map_or(0, |&m| m + 1)
    }
}

fn set_diameter(s: &[usize], space: &SampledSpace) -> f64 {
    let mut d: f64 = 0.0;
    for (a, &i) in s.iter().enumerate() {
        for &j in &s[a + 1..] {
            d = d.max(space.dist.get(i, j));
        }
    }
    d
}

pub fn mesh(c: &Cover, s: &SampledSpace) -> Result<f64> {
    c.check_covers(s.len())?;
    Ok(c.sets.iter().map(|w| set_diameter(w, s)).fold(0.0, f64::max))
}

/// -1 + the largest number of sets sharing a point.
pub fn order(c: &Cover) -> Result<usize> {
    let n = c.universe();
    c.check_covers(n)?;
    Ok(order_unchecked(c, n))
}

fn order_unchecked(c: &Cover, n: usize) -> usize {
    let mut mult = vec![0usize; n];
    for s in &c.sets {
        for &i in s {
            mult[i] += 1;
        }
    }
    mult.into_iter().max().unwrap_or(1).saturating_sub(1)
}

/// Largest sample distance value lambda such that every closed ball of radius
/// lambda lies inside a cover set; the whole-space cover reports the diameter.
pub fn lebesgue_number(c: &Cover, s: &SampledSpace) -> Result<f64> {
    let n = s.len();
    c.check_covers(n)?;
    let mut inside = vec![false; n];
    let mut gamma = f64::INFINITY;
    let members = c.memberships(n);
    for (x, mine) in members.iter().enumerate() {
        let mut best: f64 = 0.0;
        for &w in mine {
            inside.iter_mut().for_each(|b| *b = false);
            for &i in &c.sets[w] {
                inside[i] = true;
            }
            let gap = (0..n).filter(|&z| !inside[z]).map(|z| s.dist.get(x, z)).fold(f64::INFINITY, f64::min);
            best = best.max(gap);
        }
        gamma = gamma.min(best);
    }
    if gamma.is_infinite() {
        return Ok(s.dist.diameter());
    }
    let mut lam: f64 = 0.0;
    for i in 0..n {
        for &v in s.dist.row(i) {
            if v < gamma && v > lam {
                lam = v;
            }
        }
    }
    Ok(lam)
}

/// Nerve stored by its facets (maximal simplices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nerve {
    pub vertices: usize,
    pub facets: Vec<Vec<usize>>,
}

impl Nerve {
    pub fn dim(&self) -> usize {
        self.facets.iter().map(|f| f.len()).max().unwrap_or(1).saturating_sub(1)
    }

    pub fn contains(&self, simplex: &[usize]) -> bool {
        self.facets.iter().any(|f| simplex.iter().all(|v| f.binary_search(v).is_ok()))
    }

    /// Every simplex (all faces of all facets), sorted.
    pub fn simplices(&self) -> Vec<Vec<usize>> {
        let mut all = BTreeSet::new();
        for f in &self.facets {
            for mask in 1u64..(1u64 << f.len()) {
                all.insert(f.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &v)| v).collect());
            }
        }
        all.into_iter().collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = BTreeSet::new();
        for f in &self.facets {
            for (a, &u) in f.iter().enumerate() {
                for &v in &f[a + 1..] {
                    e.insert((u, v));
                }
            }
        }
        e.into_iter().collect()
    }
}

pub fn nerve(c: &Cover) -> Nerve {
    let n = c.universe();
    let mut stars: BTreeSet<Vec<usize>> = c.memberships(n).into_iter().filter(|m| !m.is_empty()).collect();
    let all: Vec<Vec<usize>> = stars.iter().cloned().collect();
    for a in &all {
        let dominated =
            all.iter().any(|b| b.len() > a.len() && a.iter().all(|v| b.binary_search(v).is_ok()));
        if dominated {
            stars.remove(a);
        }
    }
    Nerve { vertices: c.len(), facets: stars.into_iter().collect() }
}

/// Weights psi[w][z] subordinate to a cover, with anchors q_w.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub weights: Vec<Vec<f64>>,
    pub anchors: Vec<usize>,
}

impl PartitionOfUnity {
    /// Sets with positive weight at z.
    pub fn support_at(&self, z: usize) -> Vec<usize> {
        (0..self.weights.len()).filter(|&w| self.weights[w][z] > 0.0).collect()
    }

    /// sum_w psi_w(z) v_w.
    pub fn combine(&self, z: usize, values: &[Vec<f64>]) -> Vec<f64> {
        let dim = values.first().map_or(0, |v| v.len());
        let mut out = vec![0.0; dim];
        for (w, v) in values.iter().enumerate() {
            let p = self.weights[w][z];
            if p > 0.0 {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += p * x;
                }
            }
        }
        out
    }
}

/// Distinct anchors q_w in w, preferring points deep inside each set.
fn choose_anchors(c: &Cover, s: &SampledSpace) -> Result<Vec<usize>> {
    let n = s.len();
    let prefs: Vec<Vec<usize>> = c
        .sets
        .iter()
        .map(|w| {
            let depth = complement_distances(w, s);
            let mut order: Vec<usize> = (0..w.len()).collect();
            order.sort_by(|&a, &b| depth[b].total_cmp(&depth[a]).then(w[a].cmp(&w[b])));
            order.into_iter().map(|i| w[i]).collect()
        })
        .collect();
    // Bipartite matching (augmenting paths) from sets to points.
    let mut owner: Vec<Option<usize>> = vec![None; n];
    fn augment(w: usize, prefs: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &p in &prefs[w] {
            if seen[p] {
                continue;
            }
            seen[p] = true;
            if owner[p].is_none() || augment(owner[p].unwrap(), prefs, owner, seen) {
                owner[p] = Some(w);
                return true;
            }
        }
        false
    }
    for w in 0..c.len() {
        let mut seen = vec![false; n];
        if !augment(w, &prefs, &mut owner, &mut seen) {
            return Err(Error::AnchorConflict(format!("no distinct anchor available for set {w}")));
        }
    }
    let mut anchors = vec![0; c.len()];
    for (p, o) in owner.iter().enumerate() {
        if let Some(w) = o {
            anchors[*w] = p;
        }
    }
    Ok(anchors)
}

/// dist(z, complement of w) for each z in w; the whole space yields 1.
fn complement_distances(w: &[usize], s: &SampledSpace) -> Vec<f64> {
    let n = s.len();
    let mut inside = vec![false; n];
    for &i in w {
        inside[i] = true;
    }
    let outside: Vec<usize> = (0..n).filter(|&z| !inside[z]).collect();
    w.iter()
        .map(|&z| {
            if outside.is_empty() {
                1.0
            } else {
                outside.iter().map(|&o| s.dist.get(z, o)).fold(f64::INFINITY, f64::min)
            }
        })
        .collect()
}

/// Bump weights psi_w(z) proportional to dist(z, complement of w), then
/// sharpened so that psi_w(q_w) = 1.
pub fn partition_of_unity(c: &Cover, s: &SampledSpace, anchors: Option<&[usize]>) -> Result<PartitionOfUnity> {
    let n = s.len();
    c.check_covers(n)?;
    let anchors = match anchors {
        Some(a) => {
            if a.len() != c.len() {
                return Err(Error::AnchorConflict("one anchor per set is required".into()));
            }
            let mut used = BTreeSet::new();
            for (w, &q) in a.iter().enumerate() {
                if c.sets[w].binary_search(&q).is_err() {
                    return Err(Error::AnchorConflict(format!("anchor {q} lies outside set {w}")));
                }
                if !used.insert(q) {
                    return Err(Error::AnchorConflict(format!("anchor {q} is shared")));
                }
            }
            a.to_vec()
        }
        None => choose_anchors(c, s)?,
    };
    let mut weights = vec![vec![0.0; n]; c.len()];
    for (w, set) in c.sets.iter().enumerate() {
        for (&z, d) in set.iter().zip(complement_distances(set, s)) {
            weights[w][z] = d;
        }
    }
    for z in 0..n {
        let total: f64 = weights.iter().map(|row| row[z]).sum();
        for row in weights.iter_mut() {
            row[z] /= total;
        }
    }
    for (w, &q) in anchors.iter().enumerate() {
        for (v, row) in weights.iter_mut().enumerate() {
            row[q] = if v == w { 1.0 } else { 0.0 };
        }
    }
    Ok(PartitionOfUnity { weights, anchors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidimMode {
    Exact,
    Greedy,
}

/// Sets offered to the cover search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateFamily {
    /// Closed balls B(x, r).
    Balls,
    /// Balls plus B(x, r) union B(y, r) for each nearest-neighbour pair (x, y),
    /// which supplies the even-length intervals a line sample needs.
    BallsAndNeighbourPairs,
}

/// Radii used to generate candidate balls B(x, r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadiusGrid {
    /// Every distinct distance from the centre, which yields every distinct ball.
    AllDistances,
    /// r0 * ratio^i for i < count, plus r = 0.
    Geometric { r0: f64, ratio: f64, count: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidimOptions {
    pub radii: RadiusGrid,
    pub family: CandidateFamily,
    /// Largest candidate family the exact search accepts.
    pub candidate_cap: usize,
    /// Node budget of the exact search.
    pub node_cap: u64,
    /// Local-search steps spent on each attempt to lower the greedy order.
    pub search_steps: u64,
    pub seed: u64,
}

impl Default for WidimOptions {
    fn default() -> Self {
        WidimOptions {
            radii: RadiusGrid::AllDistances,
            family: CandidateFamily::BallsAndNeighbourPairs,
            candidate_cap: 4096,
            node_cap: 50_000_000,
            search_steps: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidimResult {
    pub order: usize,
    pub cover: Cover,
    pub mode: WidimMode,
    pub candidates: usize,
}

type Bits = Vec<u64>;

fn bits_of(idx: &[usize], words: usize) -> Bits {
    let mut b = vec![0u64; words];
    for &i in idx {
        b[i / 64] |= 1 << (i % 64);
    }
    b
}

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

fn meets(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).any(|(x, y)| x & y != 0)
}

fn count_and(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

/// Ball-generated candidate sets and, per point, the candidates containing its
/// closed lambda-ball.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub sets: Vec<Vec<usize>>,
    pub servers: Vec<Vec<usize>>,
}

pub fn candidate_sets(s: &SampledSpace, eps: f64, lam: f64, radii: &RadiusGrid, family: CandidateFamily) -> Candidates {
    let n = s.len();
    let words = n.div_ceil(64).max(1);
    let mut seen: BTreeSet<Bits> = BTreeSet::new();
    let mut sets = Vec::new();
    for x in 0..n {
        let row = s.dist.row(x);
        let rs: Vec<f64> = match radii {
            RadiusGrid::AllDistances => {
                let mut v: Vec<f64> = row.iter().cloned().filter(|&r| r <= eps + TAU_CMP).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            RadiusGrid::Geometric { r0, ratio, count } => {
                let mut v = vec![0.0];
                v.extend((0..*count).map(|i| r0 * ratio.powi(i as i32)));
                v
            }
        };
        let partners: Vec<usize> = match family {
            CandidateFamily::Balls => Vec::new(),
            CandidateFamily::BallsAndNeighbourPairs => {
                let gap = (0..n).filter(|&z| z != x).map(|z| row[z]).fold(f64::INFINITY, f64::min);
                (x + 1..n).filter(|&y| row[y] <= gap + TAU_CMP).collect()
            }
        };
        for r in rs {
            let ball: Vec<usize> = (0..n).filter(|&z| row[z] <= r + TAU_CMP).collect();
            if set_diameter(&ball, s) <= eps + TAU_CMP {
                let b = bits_of(&ball, words);
                if seen.insert(b) {
                    sets.push(ball);
                }
            }
            for &y in &partners {
                let other = s.dist.row(y);
                let pair: Vec<usize> = (0..n).filter(|&z| row[z] <= r + TAU_CMP || other[z] <= r + TAU_CMP).collect();
                if set_diameter(&pair, s) <= eps + TAU_CMP {
                    let b = bits_of(&pair, words);
                    if seen.insert(b) {
                        sets.push(pair);
                    }
                }
            }
        }
    }
    sets.sort();
    let set_bits: Vec<Bits> = sets.iter().map(|w| bits_of(w, words)).collect();
    let servers = (0..n)
        .map(|x| {
            let row = s.dist.row(x);
            let ball: Vec<usize> = (0..n).filter(|&z| row[z] <= lam + TAU_CMP).collect();
            let b = bits_of(&ball, words);
            (0..sets.len()).filter(|&c| subset(&b, &set_bits[c])).collect()
        })
        .collect();
    Candidates { sets, servers }
}

/// True when the closed lambda-ball of every point lies in some set of `c`.
pub fn is_admissible(c: &Cover, s: &SampledSpace, eps: f64, lam: f64) -> bool {
    let n = s.len();
    if c.check_covers(n).is_err() {
        return false;
    }
    if c.sets.iter().any(|w| set_diameter(w, s) > eps + TAU_CMP) {
        return false;
    }
    let words = n.div_ceil(64).max(1);
    let set_bits: Vec<Bits> = c.sets.iter().map(|w| bits_of(w, words)).collect();
    (0..n).all(|x| {
        let row = s.dist.row(x);
        let ball: Vec<usize> = (0..n).filter(|&z| row[z] <= lam + TAU_CMP).collect();
        let b = bits_of(&ball, words);
        set_bits.iter().any(|w| subset(&b, w))
    })
}

/// Smallest order of a cover by candidate balls with mesh <= eps whose closed
/// lambda-balls each fit in one set. Greedy mode returns an upper bound.
pub fn widim(s: &SampledSpace, eps: f64, lam: f64, mode: WidimMode, opts: &WidimOptions) -> Result<WidimResult> {
    if eps <= 0.0 || lam < 0.0 {
        return Err(Error::InvalidInput("need eps > 0 and lam >= 0".into()));
    }
    let cand = candidate_sets(s, eps, lam, &opts.radii, opts.family);
    if let Some(x) = cand.servers.iter().position(|v| v.is_empty()) {
        return Err(Error::Infeasible(format!(
            "no candidate of diameter <= {eps} contains the {lam}-ball around point {x}"
        )));
    }
    let problem = CoverProblem::new(s.len(), &cand);
    let chosen = match mode {
        WidimMode::Exact => {
            if cand.sets.len() > opts.candidate_cap {
                return Err(Error::SearchCapExceeded(format!(
                    "{} candidates exceed cap {}",
                    cand.sets.len(),
                    opts.candidate_cap
                )));
            }
            problem.exact(opts.node_cap)?
        }
        WidimMode::Greedy => problem.greedy(opts.search_steps, opts.seed),
    };
    let cover = Cover::new(chosen.iter().map(|&c| cand.sets[c].clone()).collect(), s.len())?;
    let order = order_unchecked(&cover, s.len());
    Ok(WidimResult { order, cover, mode, candidates: cand.sets.len() })
}

struct CoverProblem {
    n: usize,
    words: usize,
    members: Vec<Vec<usize>>,
    member_bits: Vec<Bits>,
    /// Targets (points) whose lambda-ball each candidate contains.
    serves: Vec<Vec<usize>>,
    serve_bits: Vec<Bits>,
    servers: Vec<Vec<usize>>,
}

impl CoverProblem {
    fn new(n: usize, cand: &Candidates) -> Self {
        let words = n.div_ceil(64).max(1);
        let mut serves = vec![Vec::new(); cand.sets.len()];
        for (x, sv) in cand.servers.iter().enumerate() {
            for &c in sv {
                serves[c].push(x);
            }
        }
        CoverProblem {
            n,
            words,
            member_bits: cand.sets.iter().map(|w| bits_of(w, words)).collect(),
            members: cand.sets.clone(),
            serve_bits: serves.iter().map(|t| bits_of(t, words)).collect(),
            serves,
            servers: cand.servers.clone(),
        }
    }

    fn exact(&self, node_cap: u64) -> Result<Vec<usize>> {
        let mut nodes = 0u64;
        for cap in 1..=self.members.len().max(1) {
            let mut st = SearchState {
                mult: vec![0; self.n],
                full: vec![0; self.words],
                served: vec![0; self.n],
                chosen: Vec::new(),
                banned: vec![false; self.members.len()],
            };
            if self.dfs(cap as u32, &mut st, &mut nodes, node_cap)? {
                return Ok(st.chosen);
            }
        }
        Err(Error::Infeasible("no admissible cover".into()))
    }

    fn viable(&self, c: usize, st: &SearchState) -> bool {
        !st.banned[c] && !meets(&self.member_bits[c], &st.full)
    }

    fn dfs(&self, cap: u32, st: &mut SearchState, nodes: &mut u64, node_cap: u64) -> Result<bool> {
        *nodes += 1;
        if *nodes > node_cap {
            return Err(Error::SearchCapExceeded(format!("node budget {node_cap} exhausted")));
        }
        let mut pick: Option<(usize, usize)> = None;
        for x in 0..self.n {
            if st.served[x] > 0 {
                continue;
            }
            let k = self.servers[x].iter().filter(|&&c| self.viable(c, st)).count();
            if k == 0 {
                return Ok(false);
            }
            if pick.is_none_or(|(_, best)| k < best) {
                pick = Some((x, k));
            }
        }
        let Some((x, _)) = pick else { return Ok(true) };
        let options: Vec<usize> = self.servers[x].iter().cloned().filter(|&c| self.viable(c, st)).collect();
        let mut banned_here = Vec::new();
        let mut found = false;
        for c in options {
            st.add(self, c, cap);
            if self.dfs(cap, st, nodes, node_cap)? {
                found = true;
                break;
            }
            st.remove(self, c, cap);
            st.banned[c] = true;
            banned_here.push(c);
        }
        for c in banned_here {
            st.banned[c] = false;
        }
        Ok(found)
    }

    /// Capped greedy construction followed by seeded local search that tries
    /// to lower the largest multiplicity one step at a time.
    fn greedy(&self, steps: u64, seed: u64) -> Vec<usize> {
        let mut best = self.construct();
        let mut rng = rng::stream(seed, "widim-greedy", 0);
        loop {
            let cap = max_mult(self, &best);
            if cap <= 1 {
                return best;
            }
            match self.lower(cap - 1, steps, &mut rng) {
                Some(sol) => best = sol,
                None => return best,
            }
        }
    }

    fn construct(&self) -> Vec<usize> {
        let mut mult = vec![0u32; self.n];
        let mut served = vec![false; self.n];
        let mut chosen = Vec::new();
        while let Some(x) = (0..self.n)
            .filter(|&x| !served[x])
            .min_by_key(|&x| (self.servers[x].len(), x))
        {
            let c = *self.servers[x]
                .iter()
                .min_by_key(|&&c| {
                    let peak = self.members[c].iter().map(|&p| mult[p]).max().unwrap_or(0);
                    let gain = self.serves[c].iter().filter(|&&t| !served[t]).count();
                    (peak, std::cmp::Reverse(gain), c)
                })
                .expect("servers are nonempty");
            for &p in &self.members[c] {
                mult[p] += 1;
            }
            for &t in &self.serves[c] {
                served[t] = true;
            }
            chosen.push(c);
        }
        prune(self, chosen)
    }

    /// Seeded walk for a selection with multiplicity at most `cap`: add a
    /// server of a random unserved target, then evict sets on overflowing
    /// points, preferring evictions that unserve the fewest targets.
    fn lower(&self, cap: u32, steps: u64, rng: &mut rng::StreamRng) -> Option<Vec<usize>> {
        let mut ls = LocalState::new(self, &[]);
        let noise = 0.1;
        for _ in 0..steps {
            if ls.unserved.is_empty() {
                return Some(prune(self, ls.chosen));
            }
            let t = ls.unserved[rng.gen_range(0..ls.unserved.len())];
            let full = ls.at_least(cap, self.words);
            let servers = &self.servers[t];
            let c = if rng.gen::<f64>() < noise {
                servers[rng.gen_range(0..servers.len())]
            } else {
                *servers
                    .iter()
                    .min_by_key(|&&c| {
                        let clash = count_and(&self.member_bits[c], &full);
                        let gain = count_and(&self.serve_bits[c], &ls.unserved_bits);
                        (clash, std::cmp::Reverse(gain), rng.gen::<u32>())
                    })
                    .expect("servers are nonempty")
            };
            ls.add(self, c);
            loop {
                let over: Vec<usize> = self.members[c].iter().cloned().filter(|&p| ls.mult[p] > cap).collect();
                if over.is_empty() {
                    break;
                }
                let p = over[rng.gen_range(0..over.len())];
                let holders: Vec<usize> = ls
                    .chosen
                    .iter()
                    .cloned()
                    .filter(|&h| h != c && self.member_bits[h][p / 64] >> (p % 64) & 1 == 1)
                    .collect();
                let victim = holders
                    .iter()
                    .cloned()
                    .min_by_key(|&h| {
                        let damage = self.serves[h].iter().filter(|&&t| ls.served[t] == 1).count();
                        (damage, rng.gen::<u32>())
                    })
                    .unwrap_or(c);
                ls.remove(self, victim);
                if victim == c {
                    break;
                }
            }
        }
        None
    }
}

fn max_mult(p: &CoverProblem, chosen: &[usize]) -> u32 {
    let mut mult = vec![0u32; p.n];
    for &c in chosen {
        for &x in &p.members[c] {
            mult[x] += 1;
        }
    }
    mult.into_iter().max().unwrap_or(0)
}

/// Drops sets that no target needs, largest first.
fn prune(p: &CoverProblem, mut chosen: Vec<usize>) -> Vec<usize> {
    chosen.sort_unstable();
    chosen.dedup();
    let mut served = vec![0u32; p.n];
    for &c in &chosen {
        for &t in &p.serves[c] {
            served[t] += 1;
        }
    }
    let mut by_size = chosen.clone();
    by_size.sort_by_key(|&c| (std::cmp::Reverse(p.members[c].len()), c));
    let mut keep: BTreeSet<usize> = chosen.into_iter().collect();
    for c in by_size {
        if p.serves[c].iter().all(|&t| served[t] > 1) {
            for &t in &p.serves[c] {
                served[t] -= 1;
            }
            keep.remove(&c);
        }
    }
    keep.into_iter().collect()
}

struct SearchState {
    mult: Vec<u32>,
    full: Bits,
    served: Vec<u32>,
    chosen: Vec<usize>,
    banned: Vec<bool>,
}

impl SearchState {
    fn add(&mut self, p: &CoverProblem, c: usize, cap: u32) {
        for &x in &p.members[c] {
            self.mult[x] += 1;
            if self.mult[x] >= cap {
                self.full[x / 64] |= 1 << (x % 64);
            }
        }
        for &t in &p.serves[c] {
            self.served[t] += 1;
        }
        self.chosen.push(c);
    }

    fn remove(&mut self, p: &CoverProblem, c: usize, cap: u32) {
        for &x in &p.members[c] {
            self.mult[x] -= 1;
            if self.mult[x] < cap {
                self.full[x / 64] &= !(1 << (x % 64));
            }
        }
        for &t in &p.serves[c] {
            self.served[t] -= 1;
        }
        self.chosen.pop();
    }
}

struct LocalState {
    mult: Vec<u32>,
    served: Vec<u32>,
    chosen: Vec<usize>,
    unserved: Vec<usize>,
    unserved_bits: Bits,
}

impl LocalState {
    fn new(p: &CoverProblem, start: &[usize]) -> Self {
        let mut ls = LocalState {
            mult: vec![0; p.n],
            served: vec![0; p.n],
            chosen: Vec::new(),
            unserved: (0..p.n).collect(),
            unserved_bits: bits_of(&(0..p.n).collect::<Vec<_>>(), p.words),
        };
        for &c in start {
            ls.add(p, c);
        }
        ls
    }

    fn add(&mut self, p: &CoverProblem, c: usize) {
        for &x in &p.members[c] {
            self.mult[x] += 1;
        }
        for &t in &p.serves[c] {
            self.served[t] += 1;
            if self.served[t] == 1 {
                self.unserved_bits[t / 64] &= !(1 << (t % 64));
            }
        }
        self.chosen.push(c);
        self.refresh_unserved();
    }

    fn remove(&mut self, p: &CoverProblem, c: usize) {
        for &x in &p.members[c] {
            self.mult[x] -= 1;
        }
        for &t in &p.serves[c] {
            self.served[t] -= 1;
            if self.served[t] == 0 {
                self.unserved_bits[t / 64] |= 1 << (t % 64);
            }
        }
        if let Some(i) = self.chosen.iter().position(|&v| v == c) {
            self.chosen.swap_remove(i);
        }
        self.refresh_unserved();
    }

    fn refresh_unserved(&mut self) {
        self.unserved.clear();
        for (w, &word) in self.unserved_bits.iter().enumerate() {
            let mut b = word;
            while b != 0 {
                let i = b.trailing_zeros() as usize;
                self.unserved.push(w * 64 + i);
                b &= b - 1;
            }
        }
    }

    fn at_least(&self, cap: u32, words: usize) -> Bits {
        let mut b = vec![0u64; words];
        for (x, &m) in self.mult.iter().enumerate() {
            if m >= cap {
                b[x / 64] |= 1 << (x % 64);
            }
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{DistMatrix, SampledSpace};

    fn line(n: usize, gap: f64) -> SampledSpace {
        SampledSpace::new(
            (0..n).map(|i| i.to_string()).collect(),
            DistMatrix::from_fn(n, |i, j| (i as f64 - j as f64).abs() * gap),
            Some(1),
        )
        .unwrap()
    }

    #[test]
    fn order_counts_multiplicity() {
        let c = Cover::new(vec![vec![0, 1], vec![1, 2], vec![1, 3]], 4).unwrap();
        assert_eq!(order(&c).unwrap(), 2);
        let d = Cover::new(vec![vec![0], vec![1]], 2).unwrap();
        assert_eq!(order(&d).unwrap(), 0);
    }

    #[test]
    fn lebesgue_of_singletons_is_zero() {
        let s = line(11, 0.1);
        let c = Cover::new((0..11).map(|i| vec![i]).collect(), 11).unwrap();
        assert_eq!(lebesgue_number(&c, &s).unwrap(), 0.0);
        let whole = Cover::new(vec![(0..11).collect()], 11).unwrap();
        assert!((lebesgue_number(&whole, &s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_example_has_order_one() {
        let s = line(11, 0.1);
        for mode in [WidimMode::Exact, WidimMode::Greedy] {
            let r = widim(&s, 0.35, 0.1, mode, &WidimOptions::default()).unwrap();
            assert_eq!(r.order, 1);
            assert!(is_admissible(&r.cover, &s, 0.35, 0.1));
        }
    }

    #[test]
    fn chain_nerve_is_a_path() {
        let c = Cover::new(vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 6], vec![6, 7]], 8).unwrap();
        let nv = nerve(&c);
        assert_eq!(nv.edges(), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(nv.dim(), 1);
    }

    #[test]
    fn pou_on_overlap_is_fractional() {
        let s = line(7, 0.1);
        let c = Cover::new(vec![vec![0, 1, 2, 3, 4], vec![2, 3, 4, 5, 6]], 7).unwrap();
        let p = partition_of_unity(&c, &s, Some(&[0, 6])).unwrap();
        for z in 2..=4 {
            assert!(p.weights[0][z] > 0.0 && p.weights[0][z] < 1.0);
            assert!((p.weights[0][z] + p.weights[1][z] - 1.0).abs() < TAU_POU);
        }
    }
}
