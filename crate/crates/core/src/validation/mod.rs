//! Oracles and statistical suites.
//!
//! Monte-Carlo checks are z-tests against exact targets: a statistic passes
//! when it lies within [`DEFAULT_Z_THRESHOLD`] standard errors. With at least
//! [`MIN_SEEDS`] seeds the false-failure rate per statistic is about `6e-5`.
//! The suites cannot rule out subtle correlations between sibling seeds that
//! leave second moments intact.

pub mod kernels;
mod quadrature;
mod report;
mod stats;
mod suites;

pub use quadrature::{quadrature_comparison, quadrature_oracle_h, quadrature_oracle_k, QuadratureComparison};
pub use report::{MomentReport, Statistic, DEFAULT_Z_THRESHOLD};
pub use suites::{
    conditional_suite, conditional_suite_with_fault, midpoint_closed_form, moment_suite, nondyadic_joint_suite,
    refinement_invariance_suite, same_leaf_linkage, vertex_between, LinkageReport, RefinementReport, MIN_SEEDS,
};
