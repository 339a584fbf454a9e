//! Exact steppers for iterated integrals of Brownian motion.
//!
//! Over `[s, t]` with `h = t - s`:
//!
//! * `∫_s^t W_{s,r} dr = h W/2 + H̄`
//! * `∫_s^t ∫_s^r W_{s,v} dv dr = h² W/6 + h H̄/2 + K̄`
//!
//! Both follow from writing each side as a Wiener integral; the kernel of the
//! second is `(t - v)²/2`.

use crate::error::{Error, Result};
use crate::levy::{LevyMode, LevyTriple};

use super::problem::Stepper;

fn area(y: &LevyTriple, needs: LevyMode) -> Result<f64> {
    let v = if needs == LevyMode::SpaceTime { y.h.as_ref() } else { y.k.as_ref() };
    v.map(|v| v[0]).ok_or(Error::ModeMismatch { expected: needs, found: y.mode() })
}

/// `dX1 = X2 dt, dX2 = dW`, driven by `(W, H)` over `[s, t]`.
pub fn exact_integrated_bm_step(state: (f64, f64), s: f64, t: f64, y: &LevyTriple) -> Result<(f64, f64)> {
    let h = t - s;
    let (x1, x2) = state;
    let w = y.w[0];
    let hh = area(y, LevyMode::SpaceTime)?;
    Ok((x1 + x2 * h + h * (0.5 * w + hh), x2 + w))
}

/// `dX1 = X2 dt, dX2 = X3 dt, dX3 = dW`, driven by `(W, H, K)` over `[s, t]`.
pub fn exact_triple_integrated_step(
    state: (f64, f64, f64),
    s: f64,
    t: f64,
    y: &LevyTriple,
) -> Result<(f64, f64, f64)> {
    let h = t - s;
    let (x1, x2, x3) = state;
    let w = y.w[0];
    let h_bar = h * area(y, LevyMode::SpaceTime)?;
    let k_bar = h * h * area(y, LevyMode::SpaceTimeTime)?;
    let x1n = x1 + x2 * h + x3 * h * h / 2.0 + w * h * h / 6.0 + h * h_bar / 2.0 + k_bar;
    let x2n = x2 + x3 * h + h * w / 2.0 + h_bar;
    Ok((x1n, x2n, x3 + w))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IntegratedBm;

impl Stepper for IntegratedBm {
    fn levy_mode(&self) -> LevyMode {
        LevyMode::SpaceTime
    }
    fn order(&self) -> f64 {
        // Exact; any positive order keeps the controller well defined.
        1.5
    }
    fn step(&self, x: &[f64], s: f64, t: f64, y: &LevyTriple) -> Result<Vec<f64>> {
        let (a, b) = exact_integrated_bm_step((x[0], x[1]), s, t, y)?;
        Ok(vec![a, b])
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TripleIntegratedBm;

impl Stepper for TripleIntegratedBm {
    fn levy_mode(&self) -> LevyMode {
        LevyMode::SpaceTimeTime
    }
    fn order(&self) -> f64 {
        2.5
    }
    fn step(&self, x: &[f64], s: f64, t: f64, y: &LevyTriple) -> Result<Vec<f64>> {
        let (a, b, c) = exact_triple_integrated_step((x[0], x[1], x[2]), s, t, y)?;
        Ok(vec![a, b, c])
    }
}
