//! Brownian paths with space-time and space-time-time Lévy areas, generated
//! from a single seed and queryable at arbitrary times in `O(log 1/ε)` time
//! and constant memory, plus an adaptive SDE-solver harness built on top.
//!
//! ```
//! use vbt_core::{LevyMode, Seed, TreeConfig, VirtualBrownianTree};
//!
//! let cfg = TreeConfig::new(0.0, 1.0, 1e-6, 2, LevyMode::SpaceTimeTime, Seed::from_u64(42))?;
//! let tree = VirtualBrownianTree::new(cfg);
//! let y = tree.eval_interval(0.3, 0.7)?;
//! assert_eq!(y.w.len(), 2);
//! # Ok::<(), vbt_core::Error>(())
//! ```

// `!(a < b)` deliberately rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridges;
pub mod error;
pub mod levy;
pub mod prng;
pub mod solvers;
pub mod tree;
pub mod validation;

pub use bridges::CovMatrix3;
pub use error::{Error, Result};
pub use levy::{LevyMode, LevyTriple, RescaledTriple, TimeInterval};
pub use prng::Seed;
pub use tree::{TreeConfig, VirtualBrownianTree};
