//! Normalised widim curves widim(X, d_[n]) / n^k and their plateau estimate.

use serde::{Deserialize, Serialize};

use crate::covers::{widim, WidimMode, WidimOptions};
use crate::error::{Error, Result};
use crate::systems::{dynamical_metric, SampledAction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdimRow {
    pub n: u32,
    pub value: usize,
    pub ratio: f64,
    pub mode: WidimMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdimCurve {
    pub eps: f64,
    pub lam: f64,
    pub k: usize,
    pub rows: Vec<MdimRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdimEstimate {
    pub value: f64,
    pub window: usize,
    /// Set when a contributing row came from the greedy search.
    pub upper_bound_only: bool,
}

pub fn mdim_curve(
    a: &SampledAction,
    eps: f64,
    lam: f64,
    n_list: &[u32],
    mode: WidimMode,
    opts: &WidimOptions,
) -> Result<MdimCurve> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.first() == Some(&0) {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let k = a.k();
    let mut rows = Vec::with_capacity(ns.len());
    for (ord, &n) in ns.iter().enumerate() {
        let space = a.space.with_dist(dynamical_metric(a, n)?);
        let row_opts = WidimOptions { seed: crate::rng::child_seed(opts.seed, "mdim-row", ord as u64), ..opts.clone() };
        let r = widim(&space, eps, lam, mode, &row_opts)?;
        let vol = (n as f64).powi(k as i32);
        rows.push(MdimRow { n, value: r.order, ratio: r.order as f64 / vol, mode });
    }
    Ok(MdimCurve { eps, lam, k, rows })
}

/// Mean of the last `window` ratios.
pub fn mdim_estimate(curve: &MdimCurve, window: usize) -> Result<MdimEstimate> {
    if window == 0 || curve.rows.len() < window {
        return Err(Error::InsufficientRows { needed: window.max(1), have: curve.rows.len() });
    }
    let tail = &curve.rows[curve.rows.len() - window..];
    let value = tail.iter().map(|r| r.ratio).sum::<f64>() / window as f64;
    let upper_bound_only = tail.iter().any(|r| r.mode == WidimMode::Greedy);
    Ok(MdimEstimate { value, window, upper_bound_only })
}
