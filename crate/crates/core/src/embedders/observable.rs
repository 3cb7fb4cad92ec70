use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::systems::SampledSpace;

/// Parametric family of an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum Family {
    /// Trigonometric polynomial in the point coordinates (read as angles) with
    /// frequencies |k|_1 <= degree and coefficients uniform in [-1, 1],
    /// normalised into [0, 1].
    RandomTrig { degree: u32, input_dim: usize },
    /// z -> sum_w psi_w(z) v_w on a sample.
    PouAffine { weights: Vec<Vec<f64>>, vertex_values: Vec<Vec<f64>> },
    /// Values listed per sample point.
    Table { values: Vec<Vec<f64>> },
}

/// Map from sample points into [0,1]^m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    #[serde(flatten)]
    pub family: Family,
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Frequency vectors with 0 < |k|_1 <= degree, one of each +-k pair.
fn frequencies(dim: usize, degree: u32) -> Vec<Vec<i64>> {
    let d = degree as i64;
    let mut all: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..dim {
        all = all
            .into_iter()
            .flat_map(|v| {
                (-d..=d).map(move |c| {
                    let mut w = v.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
    }
    all.into_iter()
        .filter(|k| {
            let norm: i64 = k.iter().map(|c| c.abs()).sum();
            norm > 0 && norm <= d && k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
        })
        .collect()
}

impl Observable {
    pub fn random_trig(m: usize, degree: u32, input_dim: usize, seed: u64) -> Self {
        Observable { family: Family::RandomTrig { degree, input_dim }, m, seed }
    }

    pub fn table(values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.first().map_or(0, |v| v.len());
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidInput("ragged observable table".into()));
        }
        Ok(Observable { family: Family::Table { values }, m, seed: 0 })
    }

    /// Values at every sample point.
    pub fn evaluate(&self, s: &SampledSpace) -> Result<Vec<Vec<f64>>> {
        let n = s.len();
        let out = match &self.family {
            Family::RandomTrig { degree, input_dim } => {
                let coords = s
                    .coords
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("random-trig observable needs point coordinates".into()))?;
                if coords.iter().any(|c| c.len() != *input_dim) {
                    return Err(Error::InvalidInput("coordinate dimension differs from input_dim".into()));
                }
                let freqs = frequencies(*input_dim, *degree);
                let mut g = rng::stream(self.seed, "random-trig", 0);
                let coef: Vec<Vec<(f64, f64)>> = (0..self.m)
                    .map(|_| freqs.iter().map(|_| (g.gen_range(-1.0..=1.0), g.gen_range(-1.0..=1.0))).collect())
                    .collect();
                coords
                    .iter()
                    .map(|x| {
                        coef.iter()
                            .map(|cs| {
                                let mut raw = 0.0;
                                let mut norm = 0.0;
                                for (k, (a, b)) in freqs.iter().zip(cs) {
                                    let phase: f64 = TAU * k.iter().zip(x).map(|(&c, &t)| c as f64 * t).sum::<f64>();
                                    raw += a * phase.cos() + b * phase.sin();
                                    norm += a.abs() + b.abs();
                                }
                                let v = if norm > 0.0 { 0.5 + 0.5 * raw / norm } else { 0.5 };
                                v.clamp(0.0, 1.0)
                            })
                            .collect()
                    })
                    .collect()
            }
            Family::PouAffine { weights, vertex_values } => {
                if weights.len() != vertex_values.len() || weights.iter().any(|w| w.len() != n) {
                    return Err(Error::InvalidInput("partition weights do not match the sample".into()));
                }
                (0..n)
                    .map(|z| {
                        let mut v = vec![0.0; self.m];
                        for (w, vals) in weights.iter().zip(vertex_values) {
                            if w[z] > 0.0 {
                                for (o, x) in v.iter_mut().zip(vals) {
                                    *o += w[z] * x;
                                }
                            }
                        }
                        v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect()
                    })
                    .collect()
            }
            Family::Table { values } => {
                if values.len() != n {
                    return Err(Error::InvalidInput("table length differs from sample size".into()));
                }
                values.iter().map(|v| v.iter().map(|x| x.clamp(0.0, 1.0)).collect()).collect()
            }
        };
        Ok(out)
    }
}

/// Sup-norm distance.
pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
