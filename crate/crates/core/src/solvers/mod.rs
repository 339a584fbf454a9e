//! SDE steppers, step-size control and strong-order estimation on top of the
//! tree.
//!
//! Steppers see Brownian data only through [`LevyTriple`](crate::LevyTriple)s
//! from [`eval_interval`](crate::VirtualBrownianTree::eval_interval), so a
//! solver may query any times in any order and still see one fixed path.

pub mod cir;
pub mod control;
pub mod exact;
pub mod experiments;
pub mod problem;
pub mod soc;
pub mod solve;

pub use cir::{cir_die_step, cir_die_step_truncated, CirDie, CirParams};
pub use control::{cir_step_controller, error_norm, pi_controller, ControllerState};
pub use exact::{exact_integrated_bm_step, exact_triple_integrated_step, IntegratedBm, TripleIntegratedBm};
pub use problem::{euler_maruyama_step, EulerMaruyama, SdeProblem, Stepper};
pub use soc::{fit_line, soc_estimate, LineFit, SeedRun, SocEstimate, SocPoint};
pub use solve::{adaptive_solve, half_step_error, Control, HalfStep, Solution, SolveOptions, SolveStats};
