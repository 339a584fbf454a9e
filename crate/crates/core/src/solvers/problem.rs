use crate::error::{Error, Result};
use crate::levy::{LevyMode, LevyTriple};

pub type VectorField = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Returns the `d` diffusion columns `g_i(x)`.
pub type DiffusionField = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// `dX = f(X) dt + Σ g_i(X) dW^i` on `[0, horizon]`.
pub struct SdeProblem {
    pub drift: VectorField,
    pub diffusion: DiffusionField,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub noise_dim: usize,
}

impl SdeProblem {
    pub fn new(
        drift: VectorField,
        diffusion: DiffusionField,
        x0: Vec<f64>,
        horizon: f64,
        noise_dim: usize,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if noise_dim == 0 || x0.is_empty() {
            return Err(Error::Config("state and noise dimensions must be at least 1".into()));
        }
        let f0 = drift(&x0);
        if f0.len() != x0.len() {
            return Err(Error::DimensionMismatch { expected: x0.len(), found: f0.len() });
        }
        let g0 = diffusion(&x0);
        if g0.len() != noise_dim {
            return Err(Error::DimensionMismatch { expected: noise_dim, found: g0.len() });
        }
        if let Some(col) = g0.iter().find(|c| c.len() != x0.len()) {
            return Err(Error::DimensionMismatch { expected: x0.len(), found: col.len() });
        }
        Ok(SdeProblem { drift, diffusion, x0, horizon, noise_dim })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

/// One step of a one-step scheme driven by Brownian data over `[s, t]`.
///
/// `y` holds whatever [`levy_mode`](Stepper::levy_mode) asks for, so schemes
/// that need space-time or space-time-time areas plug in unchanged.
pub trait Stepper: Sync {
    fn levy_mode(&self) -> LevyMode;

    /// Strong order, used to scale the PI controller exponents.
    fn order(&self) -> f64;

    fn step(&self, x: &[f64], s: f64, t: f64, y: &LevyTriple) -> Result<Vec<f64>>;
}

pub(crate) fn check_finite(x: Vec<f64>, t: f64) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::NonFinite(t))
    }
}

/// `x + f(x)(t - s) + Σ g_i(x) w_i`.
pub fn euler_maruyama_step(p: &SdeProblem, x: &[f64], s: f64, t: f64, w: &[f64]) -> Result<Vec<f64>> {
    if !(s < t) {
        return Err(Error::DegenerateInterval(format!("step needs s < t, got [{s}, {t}]")));
    }
    if w.len() != p.noise_dim {
        return Err(Error::DimensionMismatch { expected: p.noise_dim, found: w.len() });
    }
    let h = t - s;
    let f = (p.drift)(x);
    let g = (p.diffusion)(x);
    let mut out: Vec<f64> = x.iter().zip(&f).map(|(xi, fi)| xi + fi * h).collect();
    for (col, wi) in g.iter().zip(w) {
        for (o, gi) in out.iter_mut().zip(col) {
            *o += gi * wi;
        }
    }
    check_finite(out, t)
}

pub struct EulerMaruyama<'a> {
    pub problem: &'a SdeProblem,
}

impl<'a> EulerMaruyama<'a> {
    pub fn new(problem: &'a SdeProblem) -> Self {
        EulerMaruyama { problem }
    }
}

impl Stepper for EulerMaruyama<'_> {
    fn levy_mode(&self) -> LevyMode {
        LevyMode::None
    }

    fn order(&self) -> f64 {
        0.5
    }

    fn step(&self, x: &[f64], s: f64, t: f64, y: &LevyTriple) -> Result<Vec<f64>> {
        euler_maruyama_step(self.problem, x, s, t, &y.w)
    }
}
