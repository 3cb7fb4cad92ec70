//! Linear and affine independence, random extensions of independent families,
//! and structured pattern matrices with repeated entries.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Relative singular-value threshold for rank decisions.
pub const TOL_RANK: f64 = 1e-8;

/// Column vectors in R^dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFamily {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl VectorFamily {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput("vector length differs from ambient dimension".into()));
        }
        Ok(VectorFamily { dim, vectors })
    }

    fn scale(&self) -> f64 {
        self.vectors.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Numerical rank of the matrix whose columns are `cols`; singular values at
/// or below `tol * scale` count as zero.
pub fn rank(cols: &[Vec<f64>], dim: usize, tol: f64, scale: f64) -> usize {
    if cols.is_empty() || dim == 0 {
        return 0;
    }
    let m = DMatrix::from_fn(dim, cols.len(), |i, j| cols[j][i]);
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let thr = tol * scale.max(top);
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > thr).count()
}

pub fn linearly_independent(f: &VectorFamily, tol: f64) -> bool {
    let n = f.vectors.len();
    n <= f.dim && rank(&f.vectors, f.dim, tol, f.scale()) == n
}

/// No nontrivial combination with coefficients summing to zero vanishes;
/// decided by the rank of the differences v_i - v_0.
pub fn affinely_independent(f: &VectorFamily, tol: f64) -> bool {
    let n = f.vectors.len();
    if n <= 1 {
        return true;
    }
    if n - 1 > f.dim {
        return false;
    }
    let base = &f.vectors[0];
    let diffs: Vec<Vec<f64>> =
        f.vectors[1..].iter().map(|v| v.iter().zip(base).map(|(a, b)| a - b).collect()).collect();
    rank(&diffs, f.dim, tol, f.scale()) == n - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Independence {
    /// r + s <= m.
    Linear,
    /// r + s <= m + 1.
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    /// Trial ordinals that failed within tolerance.
    pub failed_trials: Vec<u64>,
}

impl RateReport {
    fn from_outcomes(outcomes: impl Iterator<Item = (u64, bool)>) -> Self {
        let mut trials = 0;
        let mut successes = 0;
        let mut failed_trials = Vec::new();
        for (t, ok) in outcomes {
            trials += 1;
            if ok {
                successes += 1;
            } else {
                failed_trials.push(t);
            }
        }
        let rate = if trials == 0 { 1.0 } else { successes as f64 / trials as f64 };
        RateReport { trials, successes, rate, failed_trials }
    }
}

/// Appends `s` uniform vectors of [0,1]^m to a linearly independent base and
/// reports how often the extended family is independent in the given sense.
pub fn random_extension_independent(
    base: &VectorFamily,
    s: usize,
    trials: u64,
    kind: Independence,
    seed: u64,
) -> Result<RateReport> {
    let r = base.vectors.len();
    let m = base.dim;
    let bound = match kind {
        Independence::Linear => m,
        Independence::Affine => m + 1,
    };
    if r + s > bound {
        return Err(Error::CaseBoundViolated { rs: r + s, bound });
    }
    if !linearly_independent(base, TOL_RANK) {
        return Err(Error::PreconditionFailed("base family is not linearly independent".into()));
    }
    Ok(RateReport::from_outcomes((0..trials).map(|t| {
        let mut g = rng::stream(seed, "random-extension", t);
        let mut vectors = base.vectors.clone();
        for _ in 0..s {
            vectors.push((0..m).map(|_| g.gen::<f64>()).collect());
        }
        let fam = VectorFamily { dim: m, vectors };
        let ok = match kind {
            Independence::Linear => linearly_independent(&fam, TOL_RANK),
            Independence::Affine => affinely_independent(&fam, TOL_RANK),
        };
        (t, ok)
    })))
}

/// (k-1) x l matrix of labels 1..=r.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternMatrix {
    pub rows: Vec<Vec<u32>>,
}

impl PatternMatrix {
    /// Checks the invariants: rectangular, labels exactly 1..=r, no label twice
    /// in a row or column, and no label more than twice overall.
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self> {
        let l = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || l == 0 || rows.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidPattern("pattern must be a nonempty rectangle".into()));
        }
        let r = *rows.iter().flatten().max().unwrap_or(&0);
        let mut count = vec![0u32; r as usize + 1];
        for &v in rows.iter().flatten() {
            if v == 0 {
                return Err(Error::InvalidPattern("labels start at 1".into()));
            }
            count[v as usize] += 1;
        }
        if let Some(v) = (1..=r).find(|&v| count[v as usize] == 0) {
            return Err(Error::InvalidPattern(format!("label {v} is missing")));
        }
        if let Some(v) = (1..=r).find(|&v| count[v as usize] > 2) {
            return Err(Error::InvalidPattern(format!("label {v} appears more than twice")));
        }
        for (i, row) in rows.iter().enumerate() {
            for a in 0..l {
                for b in a + 1..l {
                    if row[a] == row[b] {
                        return Err(Error::InvalidPattern(format!("row {i} repeats label {}", row[a])));
                    }
                }
            }
        }
        for j in 0..l {
            for a in 0..rows.len() {
                for b in a + 1..rows.len() {
                    if rows[a][j] == rows[b][j] {
                        return Err(Error::InvalidPattern(format!("column {j} repeats label {}", rows[a][j])));
                    }
                }
            }
        }
        Ok(PatternMatrix { rows })
    }

    /// Number of rows plus one.
    pub fn k(&self) -> usize {
        self.rows.len() + 1
    }

    pub fn l(&self) -> usize {
        self.rows[0].len()
    }

    pub fn r(&self) -> u32 {
        *self.rows.iter().flatten().max().expect("nonempty")
    }

    /// Square (k-1) x k pattern: extra columns filled with fresh labels.
    pub fn padded(&self) -> PatternMatrix {
        let k = self.k();
        let mut next = self.r();
        let mut rows = self.rows.clone();
        for _ in self.l()..k {
            for row in rows.iter_mut() {
                next += 1;
                row.push(next);
            }
        }
        PatternMatrix { rows }
    }

    /// A(t) with A(i, j) = t[M(i, j) - 1].
    pub fn instantiate(&self, t: &[f64]) -> Vec<Vec<f64>> {
        (0..self.l()).map(|j| self.rows.iter().map(|row| t[row[j] as usize - 1]).collect()).collect()
    }

    fn check_lemma_shape(&self) -> Result<()> {
        if self.k() < self.l().max(2) {
            return Err(Error::InvalidPattern(format!("need k >= max(l, 2), got k = {}, l = {}", self.k(), self.l())));
        }
        if self.k() > 5 {
            return Err(Error::InvalidPattern("exact identity test supports k <= 5".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub rate: RateReport,
    /// Randomised identity test: det of the padded pattern with an appended
    /// all-ones row is not the zero polynomial.
    pub pit_nonzero: bool,
}

/// Determinant of a small integer matrix by fraction-free elimination.
pub fn det_i128(mut a: Vec<Vec<i128>>) -> i128 {
    let n = a.len();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Evaluates det(B) at `reps` random integer points below 2^24 (equivalently,
/// rationals with a common large denominator); nonzero if any evaluation is.
pub fn pit_nonzero(p: &PatternMatrix, reps: u32, seed: u64) -> bool {
    let q = p.padded();
    let r = q.r() as usize;
    (0..reps).any(|rep| {
        let mut g = rng::stream(seed, "pit", rep as u64);
        let t: Vec<i128> = (0..r).map(|_| g.gen_range(1..(1i128 << 24))).collect();
        let mut rows: Vec<Vec<i128>> =
            q.rows.iter().map(|row| row.iter().map(|&v| t[v as usize - 1]).collect()).collect();
        rows.push(vec![1; q.k()]);
        det_i128(rows) != 0
    })
}

/// Empirical affine-independence rate of the columns of A(t) for uniform t,
/// together with the identity-test verdict.
pub fn pattern_generic_independent(p: &PatternMatrix, trials: u64, seed: u64) -> Result<PatternReport> {
    p.check_lemma_shape()?;
    let r = p.r() as usize;
    let dim = p.k() - 1;
    let rate = RateReport::from_outcomes((0..trials).map(|t| {
        let mut g = rng::stream(seed, "pattern-trial", t);
        let vals: Vec<f64> = (0..r).map(|_| g.gen::<f64>()).collect();
        let fam = VectorFamily { dim, vectors: p.instantiate(&vals) };
        (t, affinely_independent(&fam, TOL_RANK))
    }));
    Ok(PatternReport { rate, pit_nonzero: pit_nonzero(p, 8, rng::child_seed(seed, "pit-seed", 0)) })
}

/// All (k-1) x l patterns with r <= r_max up to relabelling, in canonical form
/// (labels first appear in increasing order, reading row by row).
pub fn enumerate_patterns(k: usize, l: usize, r_max: u32) -> Vec<PatternMatrix> {
    if k < 2 || l == 0 {
        return Vec::new();
    }
    let rows = k - 1;
    let mut grid = vec![vec![0u32; l]; rows];
    let mut count = vec![0u32; r_max as usize + 2];
    let mut out = Vec::new();
    fn go(
        cell: usize,
        top: u32,
        r_max: u32,
        grid: &mut Vec<Vec<u32>>,
        count: &mut Vec<u32>,
        out: &mut Vec<PatternMatrix>,
    ) {
        let l = grid[0].len();
        if cell == grid.len() * l {
            out.push(PatternMatrix { rows: grid.clone() });
            return;
        }
        let (i, j) = (cell / l, cell % l);
        for v in 1..=(top + 1).min(r_max) {
            if count[v as usize] >= 2 || grid[i][..j].contains(&v) || (0..i).any(|a| grid[a][j] == v) {
                continue;
            }
            grid[i][j] = v;
            count[v as usize] += 1;
            go(cell + 1, top.max(v), r_max, grid, count, out);
            count[v as usize] -= 1;
            grid[i][j] = 0;
        }
    }
    go(0, 0, r_max, &mut grid, &mut count, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_simplex_is_affinely_independent() {
        let f = VectorFamily::new(2, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(affinely_independent(&f, TOL_RANK));
        let g = VectorFamily::new(2, vec![vec![0.3, 0.1], vec![0.3, 0.1]]).unwrap();
        assert!(!affinely_independent(&g, TOL_RANK));
    }

    #[test]
    fn determinant_matches_cofactor_expansion() {
        let a = vec![vec![2, -1, 0], vec![1, 3, 4], vec![0, 5, -2]];
        assert_eq!(det_i128(a), 2 * (-6 - 20) + (-2));
    }

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_patterns(2, 1, 4), vec![PatternMatrix { rows: vec![vec![1]] }]);
        assert_eq!(enumerate_patterns(2, 2, 4), vec![PatternMatrix { rows: vec![vec![1, 2]] }]);
    }

    #[test]
    fn column_repeat_is_rejected() {
        assert!(matches!(PatternMatrix::new(vec![vec![1], vec![1]]), Err(Error::InvalidPattern(_))));
    }

    #[test]
    fn case_bound_is_enforced() {
        let base = VectorFamily::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            random_extension_independent(&base, 1, 10, Independence::Linear, 1),
            Err(Error::CaseBoundViolated { rs: 3, bound: 2 })
        ));
    }
}
