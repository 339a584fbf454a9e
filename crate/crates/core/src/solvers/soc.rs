//! Strong order of convergence from paired-seed runs.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Errors below this are treated as rounding: the scheme is exact.
pub const EXACT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// RMS of the fit residuals.
    pub residual: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit { slope, intercept, r_squared, residual: (sse / n).sqrt() }
}

/// One seed's run of one solver configuration against its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    /// Horizon over number of steps.
    pub mean_step: f64,
    /// `|x̂ - x|` at each checkpoint, terminal time last.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocPoint {
    pub label: String,
    pub mean_step: f64,
    /// RMS over seeds at the terminal time.
    pub terminal_error: f64,
    /// Largest RMS over seeds across checkpoints (terminal included).
    pub strong_error: f64,
    pub seeds: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocEstimate {
    pub points: Vec<SocPoint>,
    /// Fit of `ln strong_error` against `ln mean_step`; `None` when exact.
    pub fit: Option<LineFit>,
    pub exact: bool,
}

impl SocEstimate {
    /// Flag as exact, or fit the points with positive error.
    pub fn from_points(points: Vec<SocPoint>) -> Result<SocEstimate> {
        let usable: Vec<&SocPoint> = points.iter().filter(|p| p.seeds > 0).collect();
        let exact = !usable.is_empty() && usable.iter().all(|p| p.strong_error < EXACT_THRESHOLD);
        if exact {
            return Ok(SocEstimate { points, fit: None, exact });
        }
        let fit_pts: Vec<&&SocPoint> = usable.iter().filter(|p| p.strong_error > 0.0).collect();
        if fit_pts.len() < 3 {
            return Err(Error::TooFewStepSizes(fit_pts.len()));
        }
        let x: Vec<f64> = fit_pts.iter().map(|p| p.mean_step.ln()).collect();
        let y: Vec<f64> = fit_pts.iter().map(|p| p.strong_error.ln()).collect();
        Ok(SocEstimate { fit: Some(fit_line(&x, &y)), points, exact })
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

/// Run `run(seed_index)` for every seed and reduce per configuration.
///
/// `run` returns one result per label, all computed on the same path.
/// Seeds run in parallel; reduction happens in seed order, so the estimate
/// does not depend on the thread count.
pub fn soc_estimate<F>(labels: &[String], n_seeds: usize, run: F) -> Result<SocEstimate>
where
    F: Fn(usize) -> Vec<Result<SeedRun>> + Sync,
{
    let per_seed: Vec<Vec<Result<SeedRun>>> = (0..n_seeds).into_par_iter().map(&run).collect();
    let mut points = Vec::with_capacity(labels.len());
    for (c, label) in labels.iter().enumerate() {
        let mut ok = 0usize;
        let mut mean_step = 0.0;
        let mut sq: Vec<f64> = Vec::new();
        for runs in &per_seed {
            if let Some(Ok(r)) = runs.get(c) {
                ok += 1;
                mean_step += r.mean_step;
                if sq.is_empty() {
                    sq = vec![0.0; r.errors.len()];
                }
                for (acc, e) in sq.iter_mut().zip(&r.errors) {
                    *acc += e * e;
                }
            }
        }
        let dropped = n_seeds - ok;
        let rms: Vec<f64> = sq.iter().map(|s| (s / ok.max(1) as f64).sqrt()).collect();
        points.push(SocPoint {
            label: label.clone(),
            mean_step: mean_step / ok.max(1) as f64,
            terminal_error: rms.last().copied().unwrap_or(f64::NAN),
            strong_error: rms.iter().copied().fold(0.0, f64::max),
            seeds: ok,
            dropped,
        });
    }
    SocEstimate::from_points(points)
}
