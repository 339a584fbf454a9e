//! Drift-implicit Euler for `dX = a(b̃ - X)dt + σ√X ∘ dW`, `b̃ = b - σ²/(4a)`.
//!
//! In `y = √X` the noise is additive, `dY = (a b̃/(2Y) - aY/2) dt + σ/2 dW`,
//! and an implicit step in the drift is the positive root of
//! `(1 + ah/2) y'² - (y + σw/2) y' - a b̃ h/2 = 0`.
//!
//! When `b̃ < 0` (the Feller condition fails badly) the constant term changes
//! sign and the quadratic may have no positive root. [`cir_die_step`] refuses
//! that regime; [`cir_die_step_truncated`] takes the larger root and falls
//! back to the vertex, floored at zero, when none exists.

use crate::error::{Error, Result};
use crate::levy::{LevyMode, LevyTriple};

use super::problem::{SdeProblem, Stepper};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirParams {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl CirParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0 && self.b >= 0.0 && self.sigma >= 0.0 && self.x0 >= 0.0 && self.horizon > 0.0;
        if !ok || ![self.a, self.b, self.sigma, self.x0, self.horizon].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("invalid CIR parameters {self:?}")));
        }
        Ok(())
    }

    /// `b̃ = b - σ²/(4a)`.
    pub fn shifted_mean(&self) -> f64 {
        self.b - self.sigma * self.sigma / (4.0 * self.a)
    }

    /// The Itô form, for generic solvers.
    pub fn problem(&self) -> Result<SdeProblem> {
        let CirParams { a, b, sigma, .. } = *self;
        SdeProblem::new(
            Box::new(move |x| vec![a * (b - x[0])]),
            Box::new(move |x| vec![vec![sigma * x[0].max(0.0).sqrt()]]),
            vec![self.x0],
            self.horizon,
            1,
        )
    }
}

fn quadratic_terms(a: f64, b_tilde: f64, sigma: f64, x: f64, h: f64, w: f64) -> (f64, f64, f64) {
    let y = x.sqrt();
    (1.0 + 0.5 * a * h, y + 0.5 * sigma * w, 0.5 * a * b_tilde * h)
}

fn check_step(x: f64, s: f64, t: f64) -> Result<()> {
    if !(s < t) {
        return Err(Error::DegenerateInterval(format!("step needs s < t, got [{s}, {t}]")));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::OutOfRange { what: "CIR state", value: x, lo: 0.0, hi: f64::INFINITY });
    }
    Ok(())
}

/// One drift-implicit Euler step; requires `b̃ ≥ 0` and keeps `x > 0`.
pub fn cir_die_step(a: f64, b: f64, sigma: f64, x: f64, s: f64, t: f64, w: f64) -> Result<f64> {
    check_step(x, s, t)?;
    let b_tilde = b - sigma * sigma / (4.0 * a);
    if b_tilde < 0.0 {
        return Err(Error::NegativeShiftedMean(b_tilde));
    }
    let (qa, qb, qc) = quadratic_terms(a, b_tilde, sigma, x, t - s, w);
    let disc = qb * qb + 4.0 * qa * qc;
    debug_assert!(disc >= 0.0);
    let y = (qb + disc.sqrt()) / (2.0 * qa);
    Ok(y * y)
}

/// Drift-implicit Euler that also accepts `b̃ < 0`, truncating at zero.
pub fn cir_die_step_truncated(a: f64, b: f64, sigma: f64, x: f64, s: f64, t: f64, w: f64) -> Result<f64> {
    check_step(x, s, t)?;
    let b_tilde = b - sigma * sigma / (4.0 * a);
    let (qa, qb, qc) = quadratic_terms(a, b_tilde, sigma, x, t - s, w);
    let disc = qb * qb + 4.0 * qa * qc;
    let y = if disc >= 0.0 { (qb + disc.sqrt()) / (2.0 * qa) } else { qb / (2.0 * qa) };
    let y = y.max(0.0);
    Ok(y * y)
}

/// Drift-implicit Euler as a [`Stepper`] on the state `[x]`.
#[derive(Debug, Clone, Copy)]
pub struct CirDie {
    pub params: CirParams,
    pub truncate: bool,
}

impl CirDie {
    /// Strict scheme; rejects `b̃ < 0`.
    pub fn new(params: CirParams) -> Result<Self> {
        params.validate()?;
        if params.shifted_mean() < 0.0 {
            return Err(Error::NegativeShiftedMean(params.shifted_mean()));
        }
        Ok(CirDie { params, truncate: false })
    }

    /// Truncated scheme, usable for any `b̃`.
    pub fn truncated(params: CirParams) -> Result<Self> {
        params.validate()?;
        Ok(CirDie { params, truncate: true })
    }

    /// Strict when `b̃ ≥ 0`, truncated otherwise.
    pub fn auto(params: CirParams) -> Result<Self> {
        if params.shifted_mean() >= 0.0 {
            Self::new(params)
        } else {
            Self::truncated(params)
        }
    }

    pub fn step_scalar(&self, x: f64, s: f64, t: f64, w: f64) -> Result<f64> {
        let CirParams { a, b, sigma, .. } = self.params;
        if self.truncate {
            cir_die_step_truncated(a, b, sigma, x, s, t, w)
        } else {
            cir_die_step(a, b, sigma, x, s, t, w)
        }
    }
}

impl Stepper for CirDie {
    fn levy_mode(&self) -> LevyMode {
        LevyMode::None
    }

    fn order(&self) -> f64 {
        0.5
    }

    fn step(&self, x: &[f64], s: f64, t: f64, y: &LevyTriple) -> Result<Vec<f64>> {
        Ok(vec![self.step_scalar(x[0], s, t, y.w[0])?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::Seed;
    use crate::tree::{TreeConfig, VirtualBrownianTree};

    #[test]
    fn no_constant_term_is_a_contraction() {
        // a b̃ = 0: b = σ²/(4a)
        let (a, sigma) = (2.0, 1.0);
        let b = sigma * sigma / (4.0 * a);
        let h = 0.3;
        let x = cir_die_step(a, b, sigma, 0.8, 0.0, h, 0.0).unwrap();
        assert!((x - 0.8 / (1.0 + a * h / 2.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn tiny_step_is_consistent() {
        let x = cir_die_step(1.0, 1.0, 1.5, 0.7, 0.0, 1e-12, 0.0).unwrap();
        assert!((x / 0.7 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strict_rejects_negative_shifted_mean() {
        assert!(matches!(
            cir_die_step(1.0, 1.0, 2.5, 1.0, 0.0, 0.1, 0.0),
            Err(Error::NegativeShiftedMean(_))
        ));
        let p = CirParams { a: 1.0, b: 1.0, sigma: 2.5, x0: 1.0, horizon: 1.0 };
        assert!(CirDie::new(p).is_err());
        assert!(CirDie::auto(p).unwrap().truncate);
    }

    #[test]
    fn positivity_and_truncation() {
        for &w in &[-3.0, -1.0, 0.0, 0.5, 2.0] {
            for &x in &[0.0, 1e-6, 0.5, 3.0] {
                assert!(cir_die_step(1.0, 1.0, 1.5, x, 0.0, 0.1, w).unwrap() > 0.0);
                let y = cir_die_step_truncated(1.0, 1.0, 2.5, x, 0.0, 0.1, w).unwrap();
                assert!(y >= 0.0 && y.is_finite());
            }
        }
        // Agrees with the strict scheme where both apply.
        let a = cir_die_step(1.0, 1.0, 1.5, 0.4, 0.0, 0.1, 0.2).unwrap();
        let b = cir_die_step_truncated(1.0, 1.0, 1.5, 0.4, 0.0, 0.1, 0.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stationary_mean() {
        // Stationary law is Gamma with mean b and variance bσ²/(2a).
        let (a, b, sigma) = (1.0, 1.0, 1.5);
        let horizon = 50.0;
        let n_seeds = 2000;
        // 4096 steps of 50/4096 ≈ 0.0122 on the tree's vertex grid.
        let tol = horizon / 4096.0;
        let mut total = 0.0;
        for i in 0..n_seeds {
            let cfg = TreeConfig::new(0.0, horizon, tol, 1, LevyMode::None, Seed::from_u64(i)).unwrap();
            let tree = VirtualBrownianTree::new(cfg);
            let grid = tree.dyadic_grid();
            let w = tree.grid_values().unwrap();
            let mut x = b;
            for j in 1..grid.len() {
                x = cir_die_step(a, b, sigma, x, grid[j - 1], grid[j], w[j].w[0] - w[j - 1].w[0]).unwrap();
            }
            total += x;
        }
        let mean = total / n_seeds as f64;
        assert!((mean - b).abs() < 0.1 * b, "mean {mean}");
    }
}
