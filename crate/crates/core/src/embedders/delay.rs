use serde::{Deserialize, Serialize};

use super::observable::{sup_dist, Observable};
use super::simplicial::{pl_collision, resolution_complex};
use crate::error::{Error, Result};
use crate::rng;
use crate::systems::{period_table, DistMatrix, GroupElement, SampledAction};

/// Outputs closer than this in sup norm count as equal.
pub const TAU_EQ: f64 = 1e-10;

/// Concatenation of blocks of length m; blocks are numbered from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayVector {
    pub m: usize,
    pub data: Vec<f64>,
}

impl DelayVector {
    pub fn blocks(&self) -> usize {
        self.data.len().checked_div(self.m).unwrap_or(0)
    }

    /// v|_s.
    pub fn block(&self, s: usize) -> &[f64] {
        &self.data[s * self.m..(s + 1) * self.m]
    }

    /// v|_r^s, blocks r through s inclusive.
    pub fn slice(&self, r: usize, s: usize) -> &[f64] {
        &self.data[r * self.m..(s + 1) * self.m]
    }
}

impl AsRef<[f64]> for DelayVector {
    fn as_ref(&self) -> &[f64] {
        &self.data
    }
}

/// x -> (h(x), h(Tx), .., h(T^{2d} x)) for every sample point.
pub fn delay_map_z(a: &SampledAction, h: &Observable, d: u32) -> Result<Vec<DelayVector>> {
    if a.k() != 1 {
        return Err(Error::InvalidInput("the Z delay map needs k = 1".into()));
    }
    delay_map_zk(a, h, d)
}

/// x -> (f(ix)) over the box [0, 2d]^k in row-major order.
pub fn delay_map_zk(a: &SampledAction, f: &Observable, d: u32) -> Result<Vec<DelayVector>> {
    if 2 * d > a.horizon {
        return Err(Error::HorizonExceeded(vec![2 * d as i64; a.k()], a.horizon));
    }
    let values = f.evaluate(&a.space)?;
    delay_from_table(a, &values, f.m, d)
}

/// Delay vectors from a table of observable values.
pub fn delay_from_table(a: &SampledAction, values: &[Vec<f64>], m: usize, d: u32) -> Result<Vec<DelayVector>> {
    let images: Vec<Vec<usize>> = GroupElement::range_box(a.k(), 0, 2 * d as i64)
        .iter()
        .map(|g| a.image_table(g))
        .collect::<Result<_>>()?;
    Ok((0..a.len())
        .map(|x| {
            let mut data = Vec::with_capacity(m * images.len());
            for img in &images {
                data.extend_from_slice(&values[img[x]]);
            }
            DelayVector { m, data }
        })
        .collect())
}

/// Block k of the output is block (k mod p) of the input, for k < target.
pub fn repeat_block(v: &DelayVector, target: usize) -> DelayVector {
    let p = v.blocks().max(1);
    let mut data = Vec::with_capacity(target * v.m);
    for k in 0..target {
        data.extend_from_slice(v.block(k % p));
    }
    DelayVector { m: v.m, data }
}

/// Pairs of distinct sample points to test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<(usize, usize)>,
    #[serde(default)]
    pub margin_floor: Option<f64>,
}

impl PairSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(x, _)) = pairs.iter().find(|(x, y)| x == y) {
            return Err(Error::InvalidInput(format!("diagonal pair ({x},{x})")));
        }
        Ok(PairSet { pairs, margin_floor: None })
    }

    pub fn all(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        PairSet { pairs, margin_floor: None }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.margin_floor = Some(floor);
        self
    }
}

/// Separation statistics of a map on a set of pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub pairs_tested: usize,
    /// Smallest output distance over all tested pairs.
    pub min_separation: f64,
    pub eta: f64,
    /// Smallest output distance over tested pairs with d(x, y) >= eta.
    pub eta_margin: f64,
    /// Outputs must differ by more than this to count as separated.
    pub floor: f64,
    pub eta_injective: bool,
    /// Pair attaining eta_margin.
    pub witness: Option<(usize, usize)>,
}

pub fn separation_report<V: AsRef<[f64]>>(
    outputs: &[V],
    dist: &DistMatrix,
    pairs: Option<&PairSet>,
    eta: f64,
) -> EmbeddingReport {
    let all;
    let ps = match pairs {
        Some(p) => p,
        None => {
            all = PairSet::all(outputs.len());
            &all
        }
    };
    let floor = ps.margin_floor.unwrap_or(0.0).max(TAU_EQ);
    let mut min_separation = f64::INFINITY;
    let mut eta_margin = f64::INFINITY;
    let mut witness = None;
    for &(x, y) in &ps.pairs {
        let o = sup_dist(outputs[x].as_ref(), outputs[y].as_ref());
        min_separation = min_separation.min(o);
        if dist.get(x, y) >= eta && o < eta_margin {
            eta_margin = o;
            witness = Some((x, y));
        }
    }
    EmbeddingReport {
        pairs_tested: ps.pairs.len(),
        min_separation,
        eta,
        eta_margin,
        floor,
        eta_injective: eta_margin > floor,
        witness,
    }
}

/// How an experiment decides that a delay map collides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CollisionTest {
    /// Sample outputs within the floor (at least TAU_EQ).
    Points { floor: f64 },
    /// Sample outputs, and the piecewise-linear interpolant over the
    /// resolution complex of the declared dimension.
    Simplices,
}

/// Whether dim(P_n) < mn/2 holds for 1 <= n <= 2d. Sets of periodic points
/// are bounded by the declared dimension of the space (empty sets pass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub declared_dim: Option<usize>,
    /// (n, |P_n|) for n = 1..=2d.
    pub periodic_counts: Vec<(u64, usize)>,
    pub holds: bool,
}

pub fn takens_hypothesis(a: &SampledAction, d: u32, m: usize) -> HypothesisCheck {
    let n_max = (2 * d as u64).max(1);
    let table = period_table(a, n_max, d as u64);
    let dim = a.space.declared_dim;
    let mut holds = true;
    let mut periodic_counts = Vec::new();
    for n in 1..=2 * d as u64 {
        let count = table.p_set(n).len();
        periodic_counts.push((n, count));
        if count > 0 {
            let bound = (m as f64) * (n as f64) / 2.0;
            holds &= dim.is_some_and(|dd| (dd as f64) < bound);
        }
    }
    HypothesisCheck { declared_dim: dim, periodic_counts, holds }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub seeds: u64,
    pub passes: u64,
    pub rate: f64,
    pub eta: f64,
    pub test: CollisionTest,
    pub hypothesis: HypothesisCheck,
    /// Seeds whose delay map failed.
    pub failures: Vec<u64>,
}

/// Fraction of seeded random trigonometric observables whose delay map is
/// eta-injective on the sample.
#[allow(clippy::too_many_arguments)]
pub fn genericity_experiment(
    a: &SampledAction,
    d: u32,
    m: usize,
    degree: u32,
    seeds: u64,
    eta: f64,
    test: CollisionTest,
    master_seed: u64,
) -> Result<GenericityReport> {
    let input_dim = a
        .space
        .coords
        .as_ref()
        .and_then(|c| c.first().map(|v| v.len()))
        .ok_or_else(|| Error::InvalidInput("genericity experiment needs point coordinates".into()))?;
    let hypothesis = takens_hypothesis(a, d, m);
    let simplices = match test {
        CollisionTest::Simplices => resolution_complex(&a.space, a.space.declared_dim.unwrap_or(0)),
        CollisionTest::Points { .. } => Vec::new(),
    };
    let mut passes = 0;
    let mut failures = Vec::new();
    for i in 0..seeds {
        let h = Observable::random_trig(m, degree, input_dim, rng::child_seed(master_seed, "generic", i));
        let vecs = delay_map_zk(a, &h, d)?;
        let floor = match test {
            CollisionTest::Points { floor } => floor,
            CollisionTest::Simplices => TAU_EQ,
        };
        let ps = PairSet::all(a.len()).with_floor(floor);
        let pointwise = separation_report(&vecs, &a.space.dist, Some(&ps), eta).eta_injective;
        if pointwise && pl_collision(&vecs, &a.space, &simplices, eta, TAU_EQ).is_none() {
            passes += 1;
        } else {
            failures.push(i);
        }
    }
    let rate = if seeds == 0 { 1.0 } else { passes as f64 / seeds as f64 };
    Ok(GenericityReport { seeds, passes, rate, eta, test, hypothesis, failures })
}
