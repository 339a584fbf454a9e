//! Splittable, counter-based seed algebra.
//!
//! A [`Seed`] is a 256-bit ChaCha8 key. Nothing is ever mutated: splitting
//! reads a dedicated keystream of the parent key at a position fixed by the
//! child index, and Gaussian draws read another keystream of the same key
//! from position zero. Every seed in a tree of splits is therefore a pure
//! function of the root seed and the path of child indices leading to it.
//!
//! Gaussian variates use the Box–Muller transform on 53-bit uniforms. The
//! transform is part of the reproducibility contract and will not change.
//! Outputs are bit-exact for a given platform and build of this crate; across
//! platforms they depend on the host `ln`/`sin`/`cos` implementations.

use std::f64::consts::TAU;
use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

const NORMAL_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 0x5eed;
/// 32-bit words consumed per child key.
const WORDS_PER_CHILD: u128 = 8;

/// Opaque PRNG stream identifier. Cheap to copy; copies are interchangeable.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed([u8; 32]);

impl Seed {
    /// Root seed from a 64-bit integer (as accepted on the command line).
    pub fn from_u64(value: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&value.to_le_bytes());
        // Domain-separate from raw keys so that root seeds never collide with
        // derived children.
        key[31] = 0x80;
        Seed(key)
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Seed(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Child `index` of this seed. Independent of how many siblings exist.
    pub fn child(&self, index: u64) -> Seed {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(SPLIT_STREAM);
        rng.set_word_pos(u128::from(index) * WORDS_PER_CHILD);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Seed(key)
    }

    /// Fixed-arity split, convenient for destructuring.
    /// Identical to `[self.child(0), .., self.child(N-1)]`.
    pub fn split<const N: usize>(&self) -> [Seed; N] {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(SPLIT_STREAM);
        std::array::from_fn(|_| {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            Seed(key)
        })
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed(")?;
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// Split `seed` into `n` children.
pub fn split_seed(seed: Seed, n: usize) -> Result<Vec<Seed>> {
    if n == 0 {
        return Err(Error::EmptySplit);
    }
    Ok((0..n as u64).map(|i| seed.child(i)).collect())
}

/// `dim` independent N(0, variance) draws determined by `seed`.
///
/// The result is exactly `sqrt(variance)` times the unit-variance draw.
pub fn normal(seed: Seed, dim: usize, variance: f64) -> Result<Vec<f64>> {
    if !(variance >= 0.0) {
        return Err(Error::NegativeVariance(variance));
    }
    let mut out = standard_normal(seed, dim);
    let scale = variance.sqrt();
    for x in &mut out {
        *x *= scale;
    }
    Ok(out)
}

/// `dim` independent standard normal draws determined by `seed`.
pub fn standard_normal(seed: Seed, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    fill_standard_normal(seed, &mut out, dim);
    out
}

pub(crate) fn fill_standard_normal(seed: Seed, out: &mut Vec<f64>, dim: usize) {
    let mut rng = ChaCha8Rng::from_seed(seed.0);
    rng.set_stream(NORMAL_STREAM);
    while out.len() < dim {
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let radius = (-2.0 * u1.ln()).sqrt();
        let (sin, cos) = (TAU * u2).sin_cos();
        out.push(radius * cos);
        if out.len() < dim {
            out.push(radius * sin);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn split_is_deterministic() {
        let s = Seed::from_u64(17);
        assert_eq!(split_seed(s, 3).unwrap(), split_seed(s, 3).unwrap());
    }

    #[test]
    fn siblings_are_distinct_from_each_other_and_parent() {
        let s = Seed::from_u64(17);
        let kids = split_seed(s, 2).unwrap();
        assert_ne!(kids[0], kids[1]);
        assert!(kids.iter().all(|k| *k != s));
    }

    #[test]
    fn zero_children_rejected() {
        assert_eq!(split_seed(Seed::from_u64(1), 0), Err(Error::EmptySplit));
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(matches!(
            normal(Seed::from_u64(1), 3, -1.0),
            Err(Error::NegativeVariance(_))
        ));
        assert!(normal(Seed::from_u64(1), 3, f64::NAN).is_err());
    }

    #[test]
    fn zero_variance_gives_zero_vector() {
        assert_eq!(normal(Seed::from_u64(5), 4, 0.0).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn scaling_is_bit_exact() {
        let s = Seed::from_u64(99);
        let unit = normal(s, 7, 1.0).unwrap();
        let scaled = normal(s, 7, 2.5).unwrap();
        for (u, v) in unit.iter().zip(&scaled) {
            assert_eq!(u * 2.5f64.sqrt(), *v);
        }
    }

    #[test]
    fn prefix_consistency_across_dimensions() {
        let s = Seed::from_u64(3);
        let a = standard_normal(s, 3);
        let b = standard_normal(s, 8);
        assert_eq!(a[..], b[..3]);
    }

    #[test]
    fn sample_mean_and_variance() {
        let xs = standard_normal(Seed::from_u64(2024), 1_000_000);
        let (mean, _) = mean_var(&xs);
        // 4 sigma of 1/sqrt(N)
        assert!(mean.abs() < 0.004, "mean {mean}");
        let ys = normal(Seed::from_u64(7), 1_000_000, 2.0).unwrap();
        let (_, var) = mean_var(&ys);
        assert!((1.98..=2.02).contains(&var), "var {var}");
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let [a, b] = Seed::from_u64(11).split::<2>();
        let xs = standard_normal(a, 100_000);
        let ys = standard_normal(b, 100_000);
        let (mx, vx) = mean_var(&xs);
        let (my, vy) = mean_var(&ys);
        let cov = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / (xs.len() as f64 - 1.0);
        let rho = cov / (vx * vy).sqrt();
        assert!(rho.abs() < 0.02, "rho {rho}");
    }

    #[test]
    fn single_draws_from_many_siblings_uncorrelated() {
        // One draw per child, as the tree uses them.
        let root = Seed::from_u64(8);
        let n = 100_000u64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let [a, b] = root.child(i).split::<2>();
            let x = standard_normal(a, 1)[0];
            let y = standard_normal(b, 1)[0];
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!(rho.abs() < 0.02, "rho {rho}");
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn child_is_pure(root in any::<u64>(), i in 0u64..1000, n in 1usize..8) {
                let s = Seed::from_u64(root);
                let kids = split_seed(s, n).unwrap();
                for (j, k) in kids.iter().enumerate() {
                    prop_assert_eq!(*k, s.child(j as u64));
                }
                prop_assert_eq!(s.child(i), s.child(i));
            }

            #[test]
            fn scaling_exact(root in any::<u64>(), v in 0.0f64..1e6) {
                let s = Seed::from_u64(root);
                let unit = normal(s, 4, 1.0).unwrap();
                let scaled = normal(s, 4, v).unwrap();
                for (u, x) in unit.iter().zip(&scaled) {
                    prop_assert_eq!(u * v.sqrt(), *x);
                }
            }
        }
    }
}
