//! Finite samples of compact metric spaces carrying commuting Z^k actions.

use std::collections::BTreeMap;
use std::ops::{Add, Neg};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TAU_TRI: f64 = 1e-9;

/// Element of Z^k.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupElement(pub Vec<i64>);

impl GroupElement {
    pub fn zero(k: usize) -> Self {
        GroupElement(vec![0; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// All elements of the box {0,..,n-1}^k in row-major order (last axis fastest).
    pub fn box_elements(k: usize, n: u32) -> Vec<GroupElement> {
        Self::range_box(k, 0, n as i64 - 1)
    }

    /// All elements of {lo,..,hi}^k in row-major order.
    pub fn range_box(k: usize, lo: i64, hi: i64) -> Vec<GroupElement> {
        let mut out = vec![GroupElement(Vec::with_capacity(k))];
        for _ in 0..k {
            let mut next = Vec::with_capacity(out.len() * (hi - lo + 1).max(0) as usize);
            for g in &out {
                for v in lo..=hi {
                    let mut c = g.0.clone();
                    c.push(v);
                    next.push(GroupElement(c));
                }
            }
            out = next;
        }
        out
    }
}

impl Add for &GroupElement {
    type Output = GroupElement;
    fn add(self, o: &GroupElement) -> GroupElement {
        GroupElement(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }
}

impl Neg for &GroupElement {
    type Output = GroupElement;
    fn neg(self) -> GroupElement {
        GroupElement(self.0.iter().map(|a| -a).collect())
    }
}

/// Dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DistMatrix { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::InvalidInput("distance matrix is not square".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(DistMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    /// Smallest positive off-diagonal entry.
    pub fn min_gap(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n {
            for j in i + 1..self.n {
                m = m.min(self.get(i, j));
            }
        }
        m
    }

    /// Checks the metric axioms; the triangle inequality is checked up to `tol`.
    pub fn check_metric(&self, tol: f64) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::InvalidInput(format!("dist({i},{i}) != 0")));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 || v != self.get(j, i) {
                    return Err(Error::InvalidInput(format!("dist({i},{j}) invalid or asymmetric")));
                }
                if i != j && v <= 0.0 {
                    return Err(Error::InvalidInput(format!("points {i} and {j} coincide")));
                }
            }
        }
        for l in 0..n {
            for i in 0..n {
                let dil = self.get(i, l);
                for j in 0..n {
                    if self.get(i, j) > dil + self.get(l, j) + tol {
                        return Err(Error::InvalidInput(format!(
                            "triangle inequality fails for ({i},{l},{j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Finite point sample with its metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSpace {
    pub labels: Vec<String>,
    /// Coordinates in turns, read as angles by parametric observables.
    /// Interval-valued data is halved so 0 and 1 stay distinct.
    pub coords: Option<Vec<Vec<f64>>>,
    pub dist: DistMatrix,
    pub declared_dim: Option<usize>,
}

impl SampledSpace {
    pub fn new(labels: Vec<String>, dist: DistMatrix, declared_dim: Option<usize>) -> Result<Self> {
        if labels.len() != dist.len() {
            return Err(Error::InvalidInput("label count differs from matrix size".into()));
        }
        Ok(SampledSpace { labels, coords: None, dist, declared_dim })
    }

    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Result<Self> {
        if coords.len() != self.len() {
            return Err(Error::InvalidInput("coordinate count differs from point count".into()));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    /// Same space with another metric (used for d_[n]).
    pub fn with_dist(&self, dist: DistMatrix) -> SampledSpace {
        SampledSpace { dist, ..self.clone() }
    }

    /// Largest nearest-neighbour distance: the sample resolution.
    pub fn resolution(&self) -> f64 {
        let n = self.len();
        let mut r: f64 = 0.0;
        for i in 0..n {
            let mut nn = f64::INFINITY;
            for j in 0..n {
                if i != j {
                    nn = nn.min(self.dist.get(i, j));
                }
            }
            if nn.is_finite() {
                r = r.max(nn);
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum ClosurePolicy {
    ExactClosed,
    /// Images were snapped to the nearest sample point. A tolerance of 0
    /// places no bound; the realised error is always recorded.
    NearestSnap { tol: f64 },
}

/// One generator as an index map; `inverse` is absent for non-invertible maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub map: Vec<usize>,
    pub inverse: Option<Vec<usize>>,
}

impl Generator {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if let Some(&bad) = map.iter().find(|&&v| v >= n) {
            return Err(Error::InvalidInput(format!("generator image {bad} out of range")));
        }
        let mut inv = vec![usize::MAX; n];
        let mut bijective = true;
        for (i, &v) in map.iter().enumerate() {
            if inv[v] != usize::MAX {
                bijective = false;
                break;
            }
            inv[v] = i;
        }
        Ok(Generator { map, inverse: if bijective { Some(inv) } else { None } })
    }

    pub fn is_bijective(&self) -> bool {
        self.inverse.is_some()
    }
}

/// Sampled Z^k action.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub space: SampledSpace,
    pub generators: Vec<Generator>,
    pub horizon: u32,
    pub closure: ClosurePolicy,
    /// Largest distance between a true image and its snapped sample image.
    pub snap_error: f64,
    commutation_witness: Option<(usize, usize, usize)>,
}

pub const DEFAULT_HORIZON: u32 = 1 << 16;

impl SampledAction {
    pub fn new(space: SampledSpace, maps: Vec<Vec<usize>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidInput("an action needs k >= 1 generators".into()));
        }
        let mut generators = Vec::with_capacity(maps.len());
        for m in maps {
            if m.len() != space.len() {
                return Err(Error::InvalidInput("generator length differs from point count".into()));
            }
            generators.push(Generator::new(m)?);
        }
        let mut a = SampledAction {
            space,
            generators,
            horizon: DEFAULT_HORIZON,
            closure: ClosurePolicy::ExactClosed,
            snap_error: 0.0,
            commutation_witness: None,
        };
        a.commutation_witness = check_commutation(&a).witness;
        Ok(a)
    }

    pub fn with_horizon(mut self, horizon: u32) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_snap(mut self, tol: f64, err: f64) -> Result<Self> {
        if tol > 0.0 && err > tol {
            return Err(Error::PreconditionFailed(format!("snap error {err} exceeds tolerance {tol}")));
        }
        self.closure = ClosurePolicy::NearestSnap { tol };
        self.snap_error = err;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.generators.len()
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn is_invertible(&self) -> bool {
        self.generators.iter().all(Generator::is_bijective)
    }

    /// Applies generator `axis` `t` times (negative `t` uses the inverse).
    pub fn step(&self, axis: usize, t: i64, x: usize) -> Result<usize> {
        if t.unsigned_abs() > self.horizon as u64 {
            let mut g = vec![0; self.k()];
            g[axis] = t;
            return Err(Error::HorizonExceeded(g, self.horizon));
        }
        let gen = &self.generators[axis];
        let map = if t >= 0 {
            &gen.map
        } else {
            gen.inverse.as_ref().ok_or(Error::NotInvertible(axis))?
        };
        let mut y = x;
        for _ in 0..t.unsigned_abs() {
            y = map[y];
        }
        Ok(y)
    }

    /// Whole-sample image table of `g`.
    pub fn image_table(&self, g: &GroupElement) -> Result<Vec<usize>> {
        self.check_element(g)?;
        let mut img: Vec<usize> = (0..self.len()).collect();
        for (axis, &t) in g.0.iter().enumerate() {
            if t == 0 {
                continue;
            }
            let gen = &self.generators[axis];
            let map = if t > 0 {
                &gen.map
            } else {
                gen.inverse.as_ref().ok_or(Error::NotInvertible(axis))?
            };
            for _ in 0..t.unsigned_abs() {
                for v in img.iter_mut() {
                    *v = map[*v];
                }
            }
        }
        Ok(img)
    }

    fn check_element(&self, g: &GroupElement) -> Result<()> {
        if g.k() != self.k() {
            return Err(Error::InvalidInput(format!(
                "group element has length {}, action has k = {}",
                g.k(),
                self.k()
            )));
        }
        if g.0.iter().any(|t| t.unsigned_abs() > self.horizon as u64) {
            return Err(Error::HorizonExceeded(g.0.clone(), self.horizon));
        }
        if let Some((a, b, x)) = self.commutation_witness {
            if g.0.iter().filter(|&&t| t != 0).count() > 1 {
                return Err(Error::NonCommuting(a, b, x));
            }
        }
        Ok(())
    }

    /// Image tables for every element of the box [n]^k, row-major.
    pub fn box_images(&self, n: u32) -> Result<Vec<Vec<usize>>> {
        GroupElement::box_elements(self.k(), n).iter().map(|g| self.image_table(g)).collect()
    }
}

/// Index of `gx`.
pub fn act(a: &SampledAction, g: &GroupElement, x: usize) -> Result<usize> {
    a.check_element(g)?;
    let mut y = x;
    for (axis, &t) in g.0.iter().enumerate() {
        if t != 0 {
            y = a.step(axis, t, y)?;
        }
    }
    Ok(y)
}

/// d_[n](x, y) = max over g in [n]^k of d(gx, gy).
pub fn dynamical_metric(a: &SampledAction, n: u32) -> Result<DistMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if n - 1 > a.horizon {
        return Err(Error::HorizonExceeded(vec![n as i64 - 1; a.k()], a.horizon));
    }
    let images = a.box_images(n)?;
    let d = &a.space.dist;
    Ok(DistMatrix::from_fn(a.len(), |i, j| {
        images.iter().map(|img| d.get(img[i], img[j])).fold(0.0, f64::max)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationVerdict {
    pub commute: bool,
    /// (generator a, generator b, index) of the first violation.
    pub witness: Option<(usize, usize, usize)>,
}

pub fn check_commutation(a: &SampledAction) -> CommutationVerdict {
    for p in 0..a.k() {
        for q in p + 1..a.k() {
            let (gp, gq) = (&a.generators[p].map, &a.generators[q].map);
            for x in 0..a.len() {
                if gp[gq[x]] != gq[gp[x]] {
                    return CommutationVerdict { commute: false, witness: Some((p, q, x)) };
                }
            }
        }
    }
    CommutationVerdict { commute: true, witness: None }
}

/// Periods and the sets P_n, H_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTable {
    pub n_max: u64,
    pub d: u64,
    /// Period per point; `None` encodes infinity (no return within n_max).
    pub periods: Vec<Option<u64>>,
    /// min(2d+1, p_x).
    pub adjusted: Vec<u64>,
    /// Per-axis return times; the period for k >= 2 is the index of the
    /// diagonal stabilizer, i.e. their product.
    pub axis_periods: Vec<Vec<Option<u64>>>,
}

impl PeriodTable {
    /// P_n: points of period at most n.
    pub fn p_set(&self, n: u64) -> Vec<usize> {
        self.periods
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Some(p) if *p <= n))
            .map(|(i, _)| i)
            .collect()
    }

    /// H_n = P_n minus P_{n-1}.
    pub fn h_set(&self, n: u64) -> Vec<usize> {
        self.periods
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == Some(n))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn aperiodic(&self) -> Vec<usize> {
        self.periods.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(i, _)| i).collect()
    }

    pub fn period(&self, x: usize) -> Option<u64> {
        self.periods[x]
    }
}

pub fn period_table(a: &SampledAction, n_max: u64, d: u64) -> PeriodTable {
    let n = a.len();
    let mut axis_periods = vec![vec![None; a.k()]; n];
    for (axis, gen) in a.generators.iter().enumerate() {
        for (x, ap) in axis_periods.iter_mut().enumerate() {
            let mut y = gen.map[x];
            for t in 1..=n_max {
                if y == x {
                    ap[axis] = Some(t);
                    break;
                }
                y = gen.map[y];
            }
        }
    }
    let periods: Vec<Option<u64>> = axis_periods
        .iter()
        .map(|ap| {
            let mut prod: u64 = 1;
            for p in ap {
                prod = prod.checked_mul((*p)?)?;
            }
            (prod <= n_max).then_some(prod)
        })
        .collect();
    let cap = 2 * d + 1;
    let adjusted = periods.iter().map(|p| p.map_or(cap, |p| p.min(cap))).collect();
    PeriodTable { n_max, d, periods, adjusted, axis_periods }
}

fn arc(a: f64, b: f64) -> f64 {
    let t = (a - b).abs().rem_euclid(1.0);
    t.min(1.0 - t)
}

fn snap_shift(alpha: f64, n: usize) -> (usize, f64) {
    let t = alpha.rem_euclid(1.0) * n as f64;
    let s = t.round();
    let err = (t - s).abs() / n as f64;
    ((s as usize) % n, err)
}

/// Rotation by `alpha` on the grid {i/n}, with the shift snapped to the grid.
pub fn circle_rotation(alpha: f64, n: usize) -> Result<SampledAction> {
    if n == 0 {
        return Err(Error::InvalidInput("empty circle sample".into()));
    }
    let (s, err) = snap_shift(alpha, n);
    let pts: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let space = SampledSpace::new(
        (0..n).map(|i| format!("{i}/{n}")).collect(),
        DistMatrix::from_fn(n, |i, j| arc(pts[i], pts[j])),
        Some(1),
    )?
    .with_coords(pts.iter().map(|&p| vec![p]).collect())?;
    let map = (0..n).map(|i| (i + s) % n).collect();
    SampledAction::new(space, vec![map])?.with_snap(0.0, err)
}

/// Rotation of the k-torus by `alphas` on the grid^k lattice with the sup metric.
pub fn torus_rotation(alphas: &[f64], grid: usize) -> Result<SampledAction> {
    let k = alphas.len();
    if k == 0 || grid == 0 {
        return Err(Error::InvalidInput("torus needs k >= 1 and a nonempty grid".into()));
    }
    let total = grid.checked_pow(k as u32).ok_or_else(|| Error::InvalidInput("grid too large".into()))?;
    let digits = |mut i: usize| {
        let mut c = vec![0usize; k];
        for slot in c.iter_mut().rev() {
            *slot = i % grid;
            i /= grid;
        }
        c
    };
    let index = |c: &[usize]| c.iter().fold(0usize, |acc, &v| acc * grid + v);
    let coords: Vec<Vec<f64>> =
        (0..total).map(|i| digits(i).iter().map(|&v| v as f64 / grid as f64).collect()).collect();
    let dist = DistMatrix::from_fn(total, |i, j| {
        coords[i].iter().zip(&coords[j]).map(|(a, b)| arc(*a, *b)).fold(0.0, f64::max)
    });
    let labels = (0..total).map(|i| format!("{:?}", digits(i))).collect();
    let space = SampledSpace::new(labels, dist, Some(k))?.with_coords(coords)?;
    let mut maps = Vec::with_capacity(k);
    let mut err: f64 = 0.0;
    for (axis, &al) in alphas.iter().enumerate() {
        let (s, e) = snap_shift(al, grid);
        err = err.max(e);
        maps.push(
            (0..total)
                .map(|i| {
                    let mut c = digits(i);
                    c[axis] = (c[axis] + s) % grid;
                    index(&c)
                })
                .collect(),
        );
    }
    SampledAction::new(space, maps)?.with_snap(0.0, err)
}

/// Full shift on ([0,1]^m)^Z truncated to a cyclic window of `window`
/// coordinates, each component taking the values {0, 1/r, .., 1}.
/// The metric is max_j 2^-(|j|+1) |x_j - y_j|, |j| the cyclic distance to 0,
/// and the generator is the left shift of the window.
pub fn truncated_shift(m: usize, r: usize, window: usize) -> Result<SampledAction> {
    if m == 0 || r == 0 || window == 0 {
        return Err(Error::InvalidInput("shift needs m, r, window >= 1".into()));
    }
    let v = r + 1;
    let cells = m * window;
    let total = v
        .checked_pow(cells as u32)
        .filter(|&t| t <= 20_000)
        .ok_or_else(|| Error::InvalidInput("shift sample too large".into()))?;
    let configs: Vec<Vec<usize>> = (0..total)
        .map(|mut i| {
            let mut c = vec![0usize; cells];
            for slot in c.iter_mut().rev() {
                *slot = i % v;
                i /= v;
            }
            c
        })
        .collect();
    let weight: Vec<f64> = (0..window)
        .map(|j| {
            let cyc = j.min(window - j);
            0.5f64.powi(cyc as i32 + 1)
        })
        .collect();
    let dist = DistMatrix::from_fn(total, |a, b| {
        let mut best: f64 = 0.0;
        for (j, wj) in weight.iter().enumerate() {
            for c in 0..m {
                let cell = j * m + c;
                let diff = configs[a][cell].abs_diff(configs[b][cell]) as f64 / r as f64;
                best = best.max(wj * diff);
            }
        }
        best
    });
    let coords: Vec<Vec<f64>> =
        configs.iter().map(|c| c.iter().map(|&x| x as f64 / (2 * r) as f64).collect()).collect();
    let index = |c: &[usize]| c.iter().fold(0usize, |acc, &x| acc * v + x);
    let map = configs
        .iter()
        .map(|c| {
            let mut s = Vec::with_capacity(cells);
            s.extend_from_slice(&c[m..]);
            s.extend_from_slice(&c[..m]);
            index(&s)
        })
        .collect();
    let labels = configs.iter().map(|c| format!("{c:?}")).collect();
    let space = SampledSpace::new(labels, dist, None)?.with_coords(coords)?;
    SampledAction::new(space, vec![map])
}

/// One-point system.
pub fn fixed_point(k: usize) -> Result<SampledAction> {
    let space = SampledSpace::new(vec!["*".into()], DistMatrix::from_fn(1, |_, _| 0.0), Some(0))?
        .with_coords(vec![vec![0.0]])?;
    SampledAction::new(space, vec![vec![0]; k.max(1)])
}

/// m points on a segment with the identity action on every axis: a fibre
/// with no dynamics. Distances are |i - j| / (m - 1).
pub fn trivial_fiber(m: usize, k: usize) -> Result<SampledAction> {
    if m < 2 {
        return Err(Error::InvalidInput("a fibre needs at least 2 points".into()));
    }
    let step = 1.0 / (m - 1) as f64;
    let labels = (0..m).map(|i| format!("z{i}")).collect();
    let space = SampledSpace::new(labels, DistMatrix::from_fn(m, |i, j| i.abs_diff(j) as f64 * step), Some(0))?
        .with_coords((0..m).map(|i| vec![i as f64 * step / 2.0]).collect())?;
    SampledAction::new(space, vec![(0..m).collect(); k.max(1)])
}

/// Identity map on a side x side grid in [0,1]^2 with the sup metric.
/// Coordinates are halved so that, read as angles, opposite edges stay apart.
pub fn identity_grid(side: usize) -> Result<SampledAction> {
    if side < 2 {
        return Err(Error::InvalidInput("grid side must be at least 2".into()));
    }
    let n = side * side;
    let coords: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![(i / side) as f64 / (side - 1) as f64, (i % side) as f64 / (side - 1) as f64])
        .collect();
    let dist = DistMatrix::from_fn(n, |i, j| {
        (coords[i][0] - coords[j][0]).abs().max((coords[i][1] - coords[j][1]).abs())
    });
    let labels = coords.iter().map(|c| format!("({},{})", c[0], c[1])).collect();
    let angles = coords.iter().map(|c| vec![c[0] / 2.0, c[1] / 2.0]).collect();
    let space = SampledSpace::new(labels, dist, Some(2))?.with_coords(angles)?;
    SampledAction::new(space, vec![(0..n).collect()])
}

/// Product system with the max metric; both factors must share k.
/// Index of (i, j) is i * |B| + j.
pub fn product(a: &SampledAction, b: &SampledAction) -> Result<SampledAction> {
    if a.k() != b.k() {
        return Err(Error::InvalidInput("product factors must have the same k".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let total = na * nb;
    let dist = DistMatrix::from_fn(total, |p, q| {
        a.space.dist.get(p / nb, q / nb).max(b.space.dist.get(p % nb, q % nb))
    });
    let labels = (0..total)
        .map(|p| format!("({},{})", a.space.labels[p / nb], b.space.labels[p % nb]))
        .collect();
    let declared_dim = match (a.space.declared_dim, b.space.declared_dim) {
        (Some(x), Some(y)) => Some(x + y),
        _ => None,
    };
    let mut space = SampledSpace::new(labels, dist, declared_dim)?;
    if let (Some(ca), Some(cb)) = (&a.space.coords, &b.space.coords) {
        let coords = (0..total)
            .map(|p| {
                let mut c = ca[p / nb].clone();
                c.extend_from_slice(&cb[p % nb]);
                c
            })
            .collect();
        space = space.with_coords(coords)?;
    }
    let maps = a
        .generators
        .iter()
        .zip(&b.generators)
        .map(|(ga, gb)| (0..total).map(|p| ga.map[p / nb] * nb + gb.map[p % nb]).collect())
        .collect();
    let mut out = SampledAction::new(space, maps)?;
    out.horizon = a.horizon.min(b.horizon);
    out.snap_error = a.snap_error.max(b.snap_error);
    out.closure = match (a.closure, b.closure) {
        (ClosurePolicy::ExactClosed, ClosurePolicy::ExactClosed) => ClosurePolicy::ExactClosed,
        (ClosurePolicy::NearestSnap { tol }, _) | (_, ClosurePolicy::NearestSnap { tol }) => {
            ClosurePolicy::NearestSnap { tol }
        }
    };
    Ok(out)
}

/// Versioned JSON description of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub schema: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub points: Option<Vec<String>>,
    #[serde(default)]
    pub dist: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub coords: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub generators: Option<Vec<Vec<usize>>>,
    /// Built-in family: circle | torus | shift | fixed | identity-grid | fiber | product.
    #[serde(default)]
    pub generator: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub declared_dim: Option<usize>,
    #[serde(default)]
    pub horizon: Option<u32>,
}

pub const SYSTEM_SCHEMA: &str = "meandim.system/1";

fn param_f64(p: &BTreeMap<String, serde_json::Value>, key: &str) -> Result<f64> {
    p.get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::InvalidInput(format!("missing numeric parameter '{key}'")))
}

fn param_usize(p: &BTreeMap<String, serde_json::Value>, key: &str) -> Result<usize> {
    p.get(key)
        .and_then(|v| v.as_u64())
        .map(|v| v as usize)
        .ok_or_else(|| Error::InvalidInput(format!("missing integer parameter '{key}'")))
}

impl SystemSpec {
    pub fn build(&self) -> Result<SampledAction> {
        if self.schema != SYSTEM_SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported schema '{}'", self.schema)));
        }
        let mut a = match self.generator.as_deref() {
            None | Some("explicit") => {
                let dist = self.dist.as_ref().ok_or_else(|| Error::InvalidInput("missing 'dist'".into()))?;
                let dist = DistMatrix::from_rows(dist)?;
                if dist.len() <= 400 {
                    dist.check_metric(TAU_TRI)?;
                }
                let labels = match &self.points {
                    Some(p) => p.clone(),
                    None => (0..dist.len()).map(|i| i.to_string()).collect(),
                };
                let mut space = SampledSpace::new(labels, dist, self.declared_dim)?;
                if let Some(c) = &self.coords {
                    space = space.with_coords(c.clone())?;
                }
                let gens = self
                    .generators
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("missing 'generators'".into()))?;
                if let Some(k) = self.k {
                    if k != gens.len() {
                        return Err(Error::InvalidInput("'k' differs from generator count".into()));
                    }
                }
                SampledAction::new(space, gens)?
            }
            Some("circle") => circle_rotation(param_f64(&self.params, "alpha")?, param_usize(&self.params, "n")?)?,
            Some("torus") => {
                let alphas: Vec<f64> = self
                    .params
                    .get("alphas")
                    .and_then(|v| v.as_array())
                    .map(|a| a.iter().filter_map(|x| x.as_f64()).collect())
                    .ok_or_else(|| Error::InvalidInput("missing 'alphas'".into()))?;
                torus_rotation(&alphas, param_usize(&self.params, "grid")?)?
            }
            Some("shift") => truncated_shift(
                param_usize(&self.params, "m")?,
                param_usize(&self.params, "resolution")?,
                param_usize(&self.params, "window")?,
            )?,
            Some("fixed") => fixed_point(self.k.unwrap_or(1))?,
            Some("identity-grid") => identity_grid(param_usize(&self.params, "side")?)?,
            Some("fiber") => trivial_fiber(param_usize(&self.params, "m")?, self.k.unwrap_or(1))?,
            Some("product") => {
                let parts = self
                    .params
                    .get("factors")
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| Error::InvalidInput("missing 'factors'".into()))?;
                let mut acc: Option<SampledAction> = None;
                for p in parts {
                    let spec: SystemSpec = serde_json::from_value(p.clone())
                        .map_err(|e| Error::InvalidInput(format!("factor: {e}")))?;
                    let f = spec.build()?;
                    acc = Some(match acc {
                        None => f,
                        Some(prev) => product(&prev, &f)?,
                    });
                }
                acc.ok_or_else(|| Error::InvalidInput("empty product".into()))?
            }
            Some(other) => return Err(Error::InvalidInput(format!("unknown generator '{other}'"))),
        };
        if self.declared_dim.is_some() {
            a.space.declared_dim = self.declared_dim;
        }
        if let Some(h) = self.horizon {
            a.horizon = h;
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_element_fixes_points() {
        let a = circle_rotation(0.3, 7).unwrap();
        for x in 0..7 {
            assert_eq!(act(&a, &GroupElement::zero(1), x).unwrap(), x);
        }
    }

    #[test]
    fn cyclic_shift_composes() {
        let space = SampledSpace::new(
            (0..5).map(|i| i.to_string()).collect(),
            DistMatrix::from_fn(5, |i, j| (i as f64 - j as f64).abs()),
            None,
        )
        .unwrap();
        let a = SampledAction::new(space, vec![(0..5).map(|i| (i + 1) % 5).collect()]).unwrap();
        assert_eq!(act(&a, &GroupElement(vec![2]), 0).unwrap(), 2);
        assert_eq!(act(&a, &GroupElement(vec![-1]), 0).unwrap(), 4);
    }

    #[test]
    fn horizon_is_enforced() {
        let a = circle_rotation(0.3, 7).unwrap().with_horizon(3);
        assert!(matches!(act(&a, &GroupElement(vec![4]), 0), Err(Error::HorizonExceeded(..))));
        assert!(dynamical_metric(&a, 5).is_err());
    }

    #[test]
    fn shift_sample_size_and_generator() {
        let a = truncated_shift(1, 5, 2).unwrap();
        assert_eq!(a.len(), 36);
        assert!(a.is_invertible());
        // Shifting twice on a window of two is the identity.
        for x in 0..a.len() {
            assert_eq!(a.step(0, 2, x).unwrap(), x);
        }
    }

    #[test]
    fn spec_round_trip_for_circle() {
        let spec: SystemSpec = serde_json::from_str(
            r#"{"schema":"meandim.system/1","generator":"circle","params":{"alpha":0.25,"n":8}}"#,
        )
        .unwrap();
        let a = spec.build().unwrap();
        assert_eq!(a.step(0, 1, 0).unwrap(), 2);
    }
}
