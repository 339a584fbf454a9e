//! Model problems and paired-seed convergence experiments.
//!
//! Every seed gets one tree; the coarse runs and the reference for that seed
//! all query it, so differences between them are discretisation error only.

use crate::error::{Error, Result};
use crate::levy::LevyMode;
use crate::prng::Seed;
use crate::tree::{TreeConfig, VirtualBrownianTree};

use super::cir::{CirDie, CirParams};
use super::control::ControllerState;
use super::exact::IntegratedBm;
use super::problem::{EulerMaruyama, SdeProblem, Stepper};
use super::soc::{soc_estimate, SeedRun, SocEstimate};
use super::solve::{adaptive_solve, Control, SolveOptions};

/// `dX = μX dt + σX dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl GbmParams {
    pub fn problem(&self) -> Result<SdeProblem> {
        let GbmParams { mu, sigma, .. } = *self;
        SdeProblem::new(
            Box::new(move |x| vec![mu * x[0]]),
            Box::new(move |x| vec![vec![sigma * x[0]]]),
            vec![self.x0],
            self.horizon,
            1,
        )
    }

    /// Path-wise solution given `W_t`.
    pub fn exact(&self, t: f64, w_t: f64) -> f64 {
        self.x0 * ((self.mu - 0.5 * self.sigma * self.sigma) * t + self.sigma * w_t).exp()
    }
}

/// `dX = -θX dt + σ dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub theta: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl OuParams {
    pub fn problem(&self) -> Result<SdeProblem> {
        let OuParams { theta, sigma, .. } = *self;
        SdeProblem::new(
            Box::new(move |x| vec![-theta * x[0]]),
            Box::new(move |_| vec![vec![sigma]]),
            vec![self.x0],
            self.horizon,
            1,
        )
    }
}

/// Seeds and constant step counts shared by the sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub root_seed: Seed,
    pub n_seeds: usize,
    /// Constant step counts; each must be a multiple of the smallest.
    pub steps: Vec<usize>,
}

impl Sweep {
    fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("need at least one seed".into()));
        }
        let min = *self.steps.iter().min().ok_or_else(|| Error::Config("no step counts".into()))?;
        if min == 0 || self.steps.iter().any(|n| n % min != 0) {
            return Err(Error::Config("step counts must be positive multiples of the smallest".into()));
        }
        Ok(())
    }

    fn labels(&self) -> Vec<String> {
        self.steps.iter().map(|n| format!("N={n}")).collect()
    }

    /// The grid of the coarsest run, excluding 0 and the horizon.
    fn checkpoints(&self, horizon: f64) -> Vec<f64> {
        let n = *self.steps.iter().min().unwrap();
        (1..n).map(|j| horizon * j as f64 / n as f64).collect()
    }

    fn max_steps(&self) -> usize {
        *self.steps.iter().max().unwrap()
    }

    pub fn seed(&self, index: usize) -> Seed {
        self.root_seed.child(index as u64)
    }
}

fn errors(sol: &super::solve::Solution, reference: &[f64]) -> Vec<f64> {
    sol.checkpoints
        .iter()
        .map(|(_, x)| x[0])
        .chain(std::iter::once(sol.terminal[0]))
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .collect()
}

fn constant_runs(
    problem: &SdeProblem,
    stepper: &dyn Stepper,
    tree: &VirtualBrownianTree,
    sweep: &Sweep,
    reference: &[f64],
) -> Vec<Result<SeedRun>> {
    let opts = SolveOptions { checkpoints: sweep.checkpoints(problem.horizon), record_trajectory: false };
    sweep
        .steps
        .iter()
        .map(|&n| {
            let sol = adaptive_solve(problem, stepper, &Control::Constant { steps: n }, tree, &opts)?;
            Ok(SeedRun { mean_step: sol.stats.mean_step, errors: errors(&sol, reference) })
        })
        .collect()
}

fn fail_all(n: usize, e: Error) -> Vec<Result<SeedRun>> {
    vec![Err(e); n]
}

/// Euler–Maruyama on geometric Brownian motion against the exact solution.
pub fn gbm_em_soc(params: &GbmParams, sweep: &Sweep) -> Result<SocEstimate> {
    sweep.validate()?;
    let problem = params.problem()?;
    let horizon = params.horizon;
    let base = TreeConfig::new(0.0, horizon, horizon / sweep.max_steps() as f64, 1, LevyMode::None, Seed::from_u64(0))?;
    let mut times = sweep.checkpoints(horizon);
    times.push(horizon);
    soc_estimate(&sweep.labels(), sweep.n_seeds, |i| {
        let tree = VirtualBrownianTree::new(base.with_seed(sweep.seed(i)));
        let reference: Result<Vec<f64>> =
            times.iter().map(|&t| Ok(params.exact(t, tree.eval_point(t)?.w[0]))).collect();
        match reference {
            Ok(r) => constant_runs(&problem, &EulerMaruyama::new(&problem), &tree, sweep, &r),
            Err(e) => fail_all(sweep.steps.len(), e),
        }
    })
}

/// Fine-step reference on the tree's vertex grid, sampled at `times`.
fn grid_reference(
    tree: &VirtualBrownianTree,
    x0: &[f64],
    stepper: &dyn Stepper,
    times: &[f64],
) -> Result<Vec<f64>> {
    let grid = tree.dyadic_grid();
    let values = tree.grid_values()?;
    let leaf = tree.config().leaf_width();
    let mut want = times.iter().map(|&t| (t / leaf).round() as usize).peekable();
    let mut out = Vec::with_capacity(times.len());
    let mut x = x0.to_vec();
    for j in 1..grid.len() {
        let y = levy_increment(&values[j - 1], &values[j]);
        x = stepper.step(&x, grid[j - 1], grid[j], &y)?;
        while want.peek() == Some(&j) {
            out.push(x[0]);
            want.next();
        }
    }
    if out.len() != times.len() {
        return Err(Error::Config("reference times must lie on the tree grid".into()));
    }
    Ok(out)
}

fn levy_increment(a: &crate::levy::LevyTriple, b: &crate::levy::LevyTriple) -> crate::levy::LevyTriple {
    crate::levy::LevyTriple { w: b.w.iter().zip(&a.w).map(|(x, y)| x - y).collect(), h: None, k: None }
}

/// Euler–Maruyama on Ornstein–Uhlenbeck against an Euler–Maruyama solve
/// with 32 times more steps than the finest run, on the same path.
pub fn ou_em_soc(params: &OuParams, sweep: &Sweep) -> Result<SocEstimate> {
    sweep.validate()?;
    let problem = params.problem()?;
    let horizon = params.horizon;
    let fine = horizon / (32 * sweep.max_steps()) as f64;
    let base = TreeConfig::new(0.0, horizon, fine, 1, LevyMode::None, Seed::from_u64(0))?;
    let mut times = sweep.checkpoints(horizon);
    times.push(horizon);
    soc_estimate(&sweep.labels(), sweep.n_seeds, |i| {
        let tree = VirtualBrownianTree::new(base.with_seed(sweep.seed(i)));
        let em = EulerMaruyama::new(&problem);
        match grid_reference(&tree, &problem.x0, &em, &times) {
            Ok(r) => constant_runs(&problem, &em, &tree, sweep, &r),
            Err(e) => fail_all(sweep.steps.len(), e),
        }
    })
}

/// The exact `(W, H)` stepper for `dX1 = X2 dt, dX2 = dW`, against the exact
/// one-step solution at each checkpoint.
pub fn integrated_bm_soc(horizon: f64, sweep: &Sweep) -> Result<SocEstimate> {
    sweep.validate()?;
    let problem = SdeProblem::new(
        Box::new(|x| vec![x[1], 0.0]),
        Box::new(|_| vec![vec![0.0, 1.0]]),
        vec![0.0, 0.0],
        horizon,
        1,
    )?;
    let base = TreeConfig::new(0.0, horizon, horizon / sweep.max_steps() as f64, 1, LevyMode::SpaceTime, Seed::from_u64(0))?;
    let mut times = sweep.checkpoints(horizon);
    times.push(horizon);
    soc_estimate(&sweep.labels(), sweep.n_seeds, |i| {
        let tree = VirtualBrownianTree::new(base.with_seed(sweep.seed(i)));
        let reference: Result<Vec<f64>> = times
            .iter()
            .map(|&t| Ok(IntegratedBm.step(&[0.0, 0.0], 0.0, t, &tree.eval_interval(0.0, t)?)?[0]))
            .collect();
        match reference {
            Ok(r) => constant_runs(&problem, &IntegratedBm, &tree, sweep, &r),
            Err(e) => fail_all(sweep.steps.len(), e),
        }
    })
}

/// Constant versus adaptive drift-implicit Euler on CIR.
#[derive(Debug, Clone, PartialEq)]
pub struct CirExperiment {
    pub params: CirParams,
    pub sweep: Sweep,
    /// Global tolerances ε for the adaptive controller.
    pub tolerances: Vec<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub cir_constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirResult {
    pub constant: SocEstimate,
    pub adaptive: SocEstimate,
    /// Step of the reference solve (the tree leaf width).
    pub reference_step: f64,
    pub truncated: bool,
}

impl CirExperiment {
    /// `a = b = x0 = T = 1`, 200 seeds, `N = 8..128`, `ε = 0.2..0.01`,
    /// `h ∈ [2^-13, 1/4]`, `C = 1`.
    pub fn standard(sigma: f64) -> Self {
        CirExperiment {
            params: CirParams { a: 1.0, b: 1.0, sigma, x0: 1.0, horizon: 1.0 },
            sweep: Sweep { root_seed: Seed::from_u64(1), n_seeds: 200, steps: vec![8, 16, 32, 64, 128] },
            tolerances: vec![0.2, 0.1, 0.05, 0.02, 0.01],
            h_min: 2f64.powi(-13),
            h_max: 0.25,
            cir_constant: 1.0,
        }
    }

    /// Reference step: `h_min/32` rounded down to a tree leaf.
    pub fn tree_config(&self) -> Result<TreeConfig> {
        TreeConfig::new(0.0, self.params.horizon, self.h_min / 32.0, 1, LevyMode::None, Seed::from_u64(0))
    }

    pub fn run(&self) -> Result<CirResult> {
        self.sweep.validate()?;
        if self.tolerances.is_empty() {
            return Err(Error::Config("no tolerances".into()));
        }
        let p = self.params;
        let die = CirDie::auto(p)?;
        let problem = p.problem()?;
        let base = self.tree_config()?;
        let control = ControllerState { cir_constant: self.cir_constant, ..ControllerState::new(self.h_max, self.h_min, self.h_max, 1.0)? };
        let horizon = p.horizon;
        let n_const = self.sweep.steps.len();
        let runs = |i: usize| -> Vec<Result<SeedRun>> {
            let tree = VirtualBrownianTree::new(base.with_seed(self.sweep.seed(i)));
            let reference = match grid_reference(&tree, &[p.x0], &die, &[horizon]) {
                Ok(r) => r,
                Err(e) => return fail_all(n_const + self.tolerances.len(), e),
            };
            let mut out = Vec::with_capacity(n_const + self.tolerances.len());
            for &n in &self.sweep.steps {
                out.push(
                    adaptive_solve(&problem, &die, &Control::Constant { steps: n }, &tree, &SolveOptions::default())
                        .map(|sol| SeedRun { mean_step: sol.stats.mean_step, errors: errors(&sol, &reference) }),
                );
            }
            for &eps in &self.tolerances {
                let st = ControllerState { atol: eps, ..control.clone() };
                out.push(
                    adaptive_solve(&problem, &die, &Control::Cir(st), &tree, &SolveOptions::default())
                        .map(|sol| SeedRun { mean_step: sol.stats.mean_step, errors: errors(&sol, &reference) }),
                );
            }
            out
        };
        // One pass over the seeds serves both estimates.
        let mut labels = self.sweep.labels();
        labels.extend(self.tolerances.iter().map(|e| format!("eps={e}")));
        let joint = soc_estimate(&labels, self.sweep.n_seeds, runs)?;
        Ok(CirResult {
            constant: SocEstimate::from_points(joint.points[..n_const].to_vec())?,
            adaptive: SocEstimate::from_points(joint.points[n_const..].to_vec())?,
            reference_step: base.leaf_width(),
            truncated: die.truncate,
        })
    }
}
