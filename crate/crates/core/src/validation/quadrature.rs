//! Brute-force quadrature of the bridge integrals from path samples.
//!
//! Given `W` at grid points `t_0 < … < t_n` spanning `[s, t]`, the bridge is
//! `B_v = W_{s,v} - (v - s)/(t - s)·W_{s,t}` and
//!
//! ```text
//! H̄_{s,t} = ∫ B_v dv,      K̄_{s,t} = ∫ B_v ((s + t)/2 - v) dv,
//! ```
//!
//! both by the composite trapezoid rule. On the tree's own vertex grid the
//! difference from the tree's `H̄` is the sum of the leaf areas, so its RMS
//! over seeds is `leaf·√((t - s)/12)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prng::Seed;
use crate::tree::{TreeConfig, VirtualBrownianTree};

const MIN_POINTS: usize = 4;

fn bridge(times: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if times.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: w.len() });
    }
    if times.len() < MIN_POINTS {
        return Err(Error::Config(format!("quadrature needs at least {MIN_POINTS} points, got {}", times.len())));
    }
    if times.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::Config("quadrature times must be strictly increasing".into()));
    }
    let n = times.len() - 1;
    let (s, len) = (times[0], times[n] - times[0]);
    let w_st = w[n] - w[0];
    Ok(times.iter().zip(w).map(|(&v, &x)| x - w[0] - (v - s) / len * w_st).collect())
}

fn trapezoid(times: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    times.windows(2).enumerate().map(|(i, p)| 0.5 * (p[1] - p[0]) * (f(i) + f(i + 1))).sum()
}

/// Trapezoid estimate of `H̄_{s,t}` from `W` sampled at `times`.
pub fn quadrature_oracle_h(times: &[f64], w: &[f64]) -> Result<f64> {
    let b = bridge(times, w)?;
    Ok(trapezoid(times, |i| b[i]))
}

/// Trapezoid estimate of `K̄_{s,t}` from `W` sampled at `times`.
pub fn quadrature_oracle_k(times: &[f64], w: &[f64]) -> Result<f64> {
    let b = bridge(times, w)?;
    let mid = 0.5 * (times[0] + times[times.len() - 1]);
    Ok(trapezoid(times, |i| b[i] * (mid - times[i])))
}

/// RMS over seeds of tree-minus-quadrature for `H̄` and `K̄` over `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureComparison {
    pub leaf_width: f64,
    pub rms_h: f64,
    /// Only when the tree carries `K`.
    pub rms_k: Option<f64>,
    /// `leaf·√((t1 - t0)/12)`.
    pub predicted_rms_h: f64,
}

/// Compare the tree's root areas with quadrature on its own vertex grid,
/// coordinate 0, over seeds `cfg.seed().child(i)`.
pub fn quadrature_comparison(cfg: &TreeConfig, n_seeds: usize) -> Result<QuadratureComparison> {
    if n_seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let len = cfg.t1() - cfg.t0();
    let root: Seed = cfg.seed();
    let diffs: Vec<(f64, Option<f64>)> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let tree = VirtualBrownianTree::new(cfg.with_seed(root.child(i)));
            let grid = tree.dyadic_grid();
            let values = tree.grid_values()?;
            let w: Vec<f64> = values.iter().map(|y| y.w[0]).collect();
            let top = values.last().unwrap();
            let h_tree = top.h.as_ref().map(|h| h[0] * len);
            let h_tree = h_tree.ok_or_else(|| Error::Config("quadrature comparison needs H".into()))?;
            let dh = h_tree - quadrature_oracle_h(&grid, &w)?;
            let dk = match &top.k {
                Some(k) => Some(k[0] * len * len - quadrature_oracle_k(&grid, &w)?),
                None => None,
            };
            Ok((dh, dk))
        })
        .collect::<Result<_>>()?;
    let n = n_seeds as f64;
    let rms_h = (diffs.iter().map(|d| d.0 * d.0).sum::<f64>() / n).sqrt();
    let rms_k = diffs[0].1.map(|_| (diffs.iter().map(|d| d.1.unwrap().powi(2)).sum::<f64>() / n).sqrt());
    let leaf = cfg.leaf_width();
    Ok(QuadratureComparison { leaf_width: leaf, rms_h, rms_k, predicted_rms_h: leaf * (len / 12.0).sqrt() })
}
