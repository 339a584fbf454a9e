use log::warn;

use crate::error::{Error, Result};
use crate::tree::VirtualBrownianTree;

use super::control::{cir_step_controller, error_norm, pi_controller, ControllerState};
use super::problem::{check_finite, SdeProblem, Stepper};

/// How step sizes are chosen.
#[derive(Debug, Clone)]
pub enum Control {
    /// `steps` equal steps over the horizon.
    Constant { steps: usize },
    /// PI control of the half-stepping error estimate.
    Pi(ControllerState),
    /// `h = C (x ε)^{2/3}` from the current (scalar) state; never rejects.
    Cir(ControllerState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
    /// Horizon over accepted steps.
    pub mean_step: f64,
    /// Some path query was closer than the tree tolerance.
    pub spacing_at_risk: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Accepted times, starting at 0; empty unless recording was requested.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// States at the requested checkpoints, in increasing time order.
    pub checkpoints: Vec<(f64, Vec<f64>)>,
    pub terminal: Vec<f64>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Times in `(0, horizon)` the solver must step to exactly.
    pub checkpoints: Vec<f64>,
    pub record_trajectory: bool,
}

/// One step over `[s, t]` and two over its halves, on the same path.
#[derive(Debug, Clone)]
pub struct HalfStep {
    pub fine: Vec<f64>,
    pub coarse: Vec<f64>,
}

impl HalfStep {
    /// Unnormalised RMS difference.
    pub fn error(&self) -> f64 {
        let n = self.fine.len() as f64;
        (self.fine.iter().zip(&self.coarse).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt()
    }
}

pub fn half_step_error(
    stepper: &dyn Stepper,
    x: &[f64],
    s: f64,
    t: f64,
    path: &VirtualBrownianTree,
) -> Result<HalfStep> {
    if !(s < t) {
        return Err(Error::DegenerateInterval(format!("step needs s < t, got [{s}, {t}]")));
    }
    let m = 0.5 * (s + t);
    let coarse = stepper.step(x, s, t, &path.eval_interval(s, t)?)?;
    let half = stepper.step(x, s, m, &path.eval_interval(s, m)?)?;
    let fine = stepper.step(&half, m, t, &path.eval_interval(m, t)?)?;
    Ok(HalfStep { fine, coarse })
}

fn check_compatible(problem: &SdeProblem, stepper: &dyn Stepper, path: &VirtualBrownianTree) -> Result<()> {
    let cfg = path.config();
    if cfg.mode() < stepper.levy_mode() {
        return Err(Error::ModeMismatch { expected: stepper.levy_mode(), found: cfg.mode() });
    }
    if cfg.dim() != problem.noise_dim {
        return Err(Error::DimensionMismatch { expected: problem.noise_dim, found: cfg.dim() });
    }
    if !(cfg.t0() <= 0.0 && problem.horizon <= cfg.t1()) {
        return Err(Error::Config(format!(
            "path covers [{}, {}] but the problem needs [0, {}]",
            cfg.t0(),
            cfg.t1(),
            problem.horizon
        )));
    }
    Ok(())
}

fn targets(checkpoints: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = checkpoints.to_vec();
    if out.iter().any(|&c| !(c > 0.0 && c < horizon)) {
        return Err(Error::Config(format!("checkpoints must lie in (0, {horizon})")));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out.push(horizon);
    Ok(out)
}

struct Recorder {
    record: bool,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    checkpoints: Vec<(f64, Vec<f64>)>,
    accepted: usize,
    min_step: f64,
    max_step: f64,
}

impl Recorder {
    fn new(record: bool, x0: &[f64]) -> Self {
        Recorder {
            record,
            times: if record { vec![0.0] } else { vec![] },
            states: if record { vec![x0.to_vec()] } else { vec![] },
            checkpoints: vec![],
            accepted: 0,
            min_step: f64::INFINITY,
            max_step: 0.0,
        }
    }

    fn accept(&mut self, t: f64, h: f64, x: &[f64]) {
        self.accepted += 1;
        self.min_step = self.min_step.min(h);
        self.max_step = self.max_step.max(h);
        if self.record {
            self.times.push(t);
            self.states.push(x.to_vec());
        }
    }
}

/// Integrate `problem` over `[0, horizon]` on `path`.
///
/// With the PI controller, a rejected step at `h_min` aborts with
/// [`Error::StepUnderflow`]. A warning is logged when the controller may
/// query the path closer than the tree tolerance, since joint laws are only
/// exact for query times at least one leaf apart.
pub fn adaptive_solve(
    problem: &SdeProblem,
    stepper: &dyn Stepper,
    control: &Control,
    path: &VirtualBrownianTree,
    options: &SolveOptions,
) -> Result<Solution> {
    check_compatible(problem, stepper, path)?;
    let horizon = problem.horizon;
    let targets = targets(&options.checkpoints, horizon)?;
    let leaf = path.config().leaf_width();
    let mut rec = Recorder::new(options.record_trajectory, &problem.x0);
    let mut x = problem.x0.clone();
    let mut rejected = 0usize;
    let mut min_spacing = f64::INFINITY;

    match control {
        Control::Constant { steps } => {
            if *steps == 0 {
                return Err(Error::Config("need at least one step".into()));
            }
            let n = *steps;
            let grid = |j: usize| if j == n { horizon } else { horizon * j as f64 / n as f64 };
            let mut next_target = 0;
            for j in 1..=n {
                let (s, t) = (grid(j - 1), grid(j));
                x = check_finite(stepper.step(&x, s, t, &path.eval_interval(s, t)?)?, t)?;
                min_spacing = min_spacing.min(t - s);
                rec.accept(t, t - s, &x);
                while next_target < targets.len() && (targets[next_target] - t).abs() <= 1e-12 * horizon {
                    if next_target + 1 < targets.len() {
                        rec.checkpoints.push((targets[next_target], x.clone()));
                    }
                    next_target += 1;
                }
            }
            if next_target != targets.len() {
                return Err(Error::Config("checkpoints must lie on the constant step grid".into()));
            }
        }
        Control::Pi(init) | Control::Cir(init) => {
            init.validate()?;
            let is_pi = matches!(control, Control::Pi(_));
            let smallest_query = if is_pi { init.h_min / 2.0 } else { init.h_min };
            if smallest_query < leaf {
                warn!(
                    "h_min = {} allows path queries {} apart, below the tree leaf width {}; \
                     joint laws of the queried values are no longer exact",
                    init.h_min, smallest_query, leaf
                );
            }
            if !is_pi && x.len() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, found: x.len() });
            }
            let mut state = init.clone();
            let mut t = 0.0;
            let mut ti = 0;
            while ti < targets.len() {
                let target = targets[ti];
                let h = if is_pi { state.h } else { cir_step_controller(x[0], state.atol, &state) };
                let mut step = h.min(target - t);
                // Never leave a sliver shorter than h_min before the target.
                if target - (t + step) < state.h_min {
                    step = target - t;
                }
                let t_next = if step == target - t { target } else { t + step };
                let step = t_next - t;
                let (accept, candidate) = if is_pi {
                    let hs = half_step_error(stepper, &x, t, t_next, path)?;
                    let err = error_norm(&hs.fine, &hs.coarse, &state);
                    state.h = step;
                    let (accept, _) = pi_controller(err, &mut state, stepper.order());
                    min_spacing = min_spacing.min(step / 2.0);
                    (accept, hs.fine)
                } else {
                    min_spacing = min_spacing.min(step);
                    (true, stepper.step(&x, t, t_next, &path.eval_interval(t, t_next)?)?)
                };
                if accept {
                    x = check_finite(candidate, t_next)?;
                    t = t_next;
                    rec.accept(t, step, &x);
                    if t == target {
                        if ti + 1 < targets.len() {
                            rec.checkpoints.push((t, x.clone()));
                        }
                        ti += 1;
                    }
                } else {
                    rejected += 1;
                    if step <= state.h_min * (1.0 + 1e-12) {
                        return Err(Error::StepUnderflow { t, h_min: state.h_min });
                    }
                }
            }
        }
    }

    let stats = SolveStats {
        accepted: rec.accepted,
        rejected,
        min_step: rec.min_step,
        max_step: rec.max_step,
        mean_step: horizon / rec.accepted as f64,
        spacing_at_risk: min_spacing < leaf * (1.0 - 1e-12),
    };
    Ok(Solution { times: rec.times, states: rec.states, checkpoints: rec.checkpoints, terminal: x, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMode;
    use crate::prng::Seed;
    use crate::solvers::exact::IntegratedBm;
    use crate::solvers::problem::EulerMaruyama;
    use crate::tree::TreeConfig;

    fn path(seed: u64, tol: f64, mode: LevyMode) -> VirtualBrownianTree {
        VirtualBrownianTree::new(TreeConfig::new(0.0, 1.0, tol, 1, mode, Seed::from_u64(seed)).unwrap())
    }

    fn linear(lambda: f64, g: f64) -> SdeProblem {
        SdeProblem::new(
            Box::new(move |x| vec![lambda * x[0]]),
            Box::new(move |x| vec![vec![g * x[0]]]),
            vec![1.0],
            1.0,
            1,
        )
        .unwrap()
    }

    #[test]
    fn half_step_exact_cases() {
        // Additive noise, no drift: increments add exactly.
        let p = SdeProblem::new(Box::new(|_| vec![0.0]), Box::new(|_| vec![vec![2.0]]), vec![0.0], 1.0, 1).unwrap();
        let em = EulerMaruyama::new(&p);
        let hs = half_step_error(&em, &[0.3], 0.1, 0.7, &path(1, 1e-3, LevyMode::None)).unwrap();
        assert!(hs.error() < 1e-15);
        // Exact stepper on its own system.
        let hs = half_step_error(&IntegratedBm, &[0.3, 1.0], 0.1, 0.7, &path(1, 1e-3, LevyMode::SpaceTime)).unwrap();
        assert!(hs.error() < 1e-14);
    }

    #[test]
    fn half_step_error_scales_with_order() {
        // EM on dX = X dW: local error ~ h^{1}, i.e. order 1/2 + 1/2.
        let p = linear(0.0, 1.0);
        let em = EulerMaruyama::new(&p);
        let hs: Vec<f64> = (2..7).map(|k| 2f64.powi(-k)).collect();
        let mut errs = vec![0.0; hs.len()];
        let n = 400;
        for seed in 0..n {
            let tree = path(seed, 2f64.powi(-10), LevyMode::None);
            for (e, &h) in errs.iter_mut().zip(&hs) {
                *e += half_step_error(&em, &[1.0], 0.0, h, &tree).unwrap().error().powi(2);
            }
        }
        let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| (e / n as f64).sqrt().ln()).collect();
        let slope = crate::solvers::soc::fit_line(&lx, &ly).slope;
        assert!((slope - 1.0).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn zero_noise_linear_ode() {
        let p = linear(-1.0, 0.0);
        let em = EulerMaruyama::new(&p);
        let mut st = ControllerState::new(0.01, 1e-6, 0.5, 1e-7).unwrap();
        st.err_prev = 1.0;
        let tree = path(0, 1e-6, LevyMode::None);
        let sol = adaptive_solve(&p, &em, &Control::Pi(st), &tree, &SolveOptions::default()).unwrap();
        assert!((sol.terminal[0] - (-1f64).exp()).abs() < 1e-3);
        assert!(sol.stats.rejected < sol.stats.accepted);
        assert!(!sol.stats.spacing_at_risk);
    }

    #[test]
    fn solve_is_deterministic_and_hits_checkpoints() {
        let p = linear(0.1, 0.5);
        let em = EulerMaruyama::new(&p);
        let st = ControllerState::new(0.05, 1e-4, 0.5, 1e-2).unwrap();
        let tree = path(3, 2f64.powi(-14), LevyMode::None);
        let opts = SolveOptions { checkpoints: vec![0.5, 0.25], record_trajectory: true };
        let a = adaptive_solve(&p, &em, &Control::Pi(st.clone()), &tree, &opts).unwrap();
        let b = adaptive_solve(&p, &em, &Control::Pi(st), &tree, &opts).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.times, b.times);
        assert_eq!(a.checkpoints.iter().map(|c| c.0).collect::<Vec<_>>(), vec![0.25, 0.5]);
        assert!(a.times.contains(&0.25) && a.times.contains(&0.5));
        assert_eq!(*a.times.last().unwrap(), 1.0);
        assert_eq!(a.stats.accepted + 1, a.times.len());
        assert!(a.times.windows(2).all(|w| w[1] - w[0] >= 1e-4 * (1.0 - 1e-9)));
    }

    #[test]
    fn constant_steps_and_checkpoints() {
        let p = linear(0.1, 0.5);
        let em = EulerMaruyama::new(&p);
        let tree = path(3, 2f64.powi(-8), LevyMode::None);
        let opts = SolveOptions { checkpoints: vec![0.5], record_trajectory: false };
        let sol = adaptive_solve(&p, &em, &Control::Constant { steps: 8 }, &tree, &opts).unwrap();
        assert_eq!(sol.stats.accepted, 8);
        assert_eq!(sol.checkpoints.len(), 1);
        let bad = SolveOptions { checkpoints: vec![0.3], record_trajectory: false };
        assert!(adaptive_solve(&p, &em, &Control::Constant { steps: 8 }, &tree, &bad).is_err());
    }

    #[test]
    fn underflow_is_reported() {
        let p = linear(0.0, 1.0);
        let em = EulerMaruyama::new(&p);
        let st = ControllerState::new(0.1, 0.05, 0.5, 1e-12).unwrap();
        let tree = path(3, 2f64.powi(-8), LevyMode::None);
        let r = adaptive_solve(&p, &em, &Control::Pi(st), &tree, &SolveOptions::default());
        assert!(matches!(r, Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn spacing_risk_flagged() {
        let p = linear(0.0, 1.0);
        let em = EulerMaruyama::new(&p);
        let tree = path(3, 0.25, LevyMode::None);
        let sol = adaptive_solve(&p, &em, &Control::Constant { steps: 8 }, &tree, &SolveOptions::default()).unwrap();
        assert!(sol.stats.spacing_at_risk);
    }

    #[test]
    fn mode_and_interval_checks() {
        let tree = path(3, 0.25, LevyMode::None);
        let two = SdeProblem::new(Box::new(|_| vec![0.0, 0.0]), Box::new(|_| vec![vec![0.0, 1.0]]), vec![0.0, 0.0], 1.0, 1).unwrap();
        assert!(adaptive_solve(&two, &IntegratedBm, &Control::Constant { steps: 4 }, &tree, &SolveOptions::default()).is_err());
        let long = SdeProblem::new(Box::new(|_| vec![0.0]), Box::new(|_| vec![vec![1.0]]), vec![0.0], 2.0, 1).unwrap();
        let em = EulerMaruyama::new(&long);
        assert!(adaptive_solve(&long, &em, &Control::Constant { steps: 4 }, &tree, &SolveOptions::default()).is_err());
    }
}
