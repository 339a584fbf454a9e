//! Conditional Gaussian generation of increments and Lévy areas.
//!
//! Two families of bridges: midpoint bridges, used while descending the tree,
//! and general-time interpolation, used once at the leaf. Every sampler has a
//! `*_given` twin that takes the standard normal draws explicitly; feeding it
//! zeros yields the conditional mean.
//!
//! Seed consumption per call is fixed: `midpoint_w` and `interp_w` draw from
//! the seed directly, `midpoint_wh` splits it into `(Z, N)`, `midpoint_whk`
//! into `(Z, X1, X2)`, `interp_wh` into `(X1, X2)`, and `interp_whk` draws
//! `3·d` normals from the seed laid out as `[ξ_W; ξ_H; ξ_K]`.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::levy::{self, LevyMode, LevyTriple, RescaledTriple};
use crate::prng::{standard_normal, Seed};

/// Relative eigenvalue tolerance below which a covariance is rejected.
const PSD_TOLERANCE: f64 = 1e-14;

/// Deliberate coefficient corruption, used to check that the statistical
/// suites detect a broken bridge.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negate the `K_{s,u}` coefficient of `E[H_{s,r} | Y_{s,u}]`.
    FlipHkMean,
}

/// Symmetric 3×3 covariance of `(W, H, K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix3(pub [[f64; 3]; 3]);

impl CovMatrix3 {
    pub fn zero() -> Self {
        CovMatrix3([[0.0; 3]; 3])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&x| x == 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..3).all(|i| (0..3).all(|j| self.0[i][j] == self.0[j][i]))
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.0[i][j])
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let e = SymmetricEigen::new(self.matrix()).eigenvalues;
        [e[0], e[1], e[2]]
    }

    /// Lower Cholesky factor, if the matrix is positive definite.
    pub fn cholesky(&self) -> Option<[[f64; 3]; 3]> {
        let l = self.matrix().cholesky()?.l();
        Some(std::array::from_fn(|i| std::array::from_fn(|j| l[(i, j)])))
    }

    /// Symmetric square root `V diag(sqrt(max(λ, 0))) Vᵀ`.
    ///
    /// Eigenvalues slightly below zero from rounding are clamped; anything more
    /// negative than `1e-14` relative to the largest eigenvalue is an error.
    pub fn sqrt_psd(&self) -> Result<[[f64; 3]; 3]> {
        let eig = SymmetricEigen::new(self.matrix());
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let min = eig.eigenvalues.min();
        if min < -PSD_TOLERANCE * max {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let m = eig.eigenvectors * Matrix3::from_diagonal(&root) * eig.eigenvectors.transpose();
        Ok(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))
    }
}

fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if !(lo <= value && value <= hi) {
        return Err(Error::OutOfRange { what, value, lo, hi });
    }
    Ok(())
}

fn check_positive_interval(s: f64, u: f64) -> Result<()> {
    if !(u > s) {
        return Err(Error::DegenerateInterval(format!("need u > s, got [{s}, {u}]")));
    }
    Ok(())
}

fn h_of(y: &RescaledTriple) -> &[f64] {
    y.h.as_deref().expect("triple lacks H̄")
}

fn k_of(y: &RescaledTriple) -> &[f64] {
    y.k.as_deref().expect("triple lacks K̄")
}

// ---------------------------------------------------------------------------
// Midpoint bridges

/// Brownian value at the midpoint `t = (s+u)/2` given the endpoint values.
pub fn midpoint_w(s: f64, t: f64, u: f64, w_s: &[f64], w_u: &[f64], seed: Seed) -> Result<Vec<f64>> {
    check_positive_interval(s, u)?;
    if t != 0.5 * (s + u) {
        return Err(Error::OutOfRange { what: "midpoint t", value: t, lo: 0.5 * (s + u), hi: 0.5 * (s + u) });
    }
    if w_s.len() != w_u.len() {
        return Err(Error::DimensionMismatch { expected: w_s.len(), found: w_u.len() });
    }
    Ok(midpoint_w_given(s, u, w_s, w_u, &standard_normal(seed, w_s.len())))
}

pub fn midpoint_w_given(s: f64, u: f64, w_s: &[f64], w_u: &[f64], xi: &[f64]) -> Vec<f64> {
    let c = 0.5 * (u - s).sqrt();
    (0..w_s.len()).map(|i| 0.5 * (w_s[i] + w_u[i]) + c * xi[i]).collect()
}

/// Split `Ȳ_{s,u}` at the midpoint, returning `(Ȳ_{s,t}, Ȳ_{t,u})` for `(W, H̄)`.
pub fn midpoint_wh(
    s: f64,
    u: f64,
    y_su: &RescaledTriple,
    seed: Seed,
) -> Result<(RescaledTriple, RescaledTriple)> {
    check_positive_interval(s, u)?;
    y_su.require(LevyMode::SpaceTime)?;
    let d = y_su.dim();
    let [sz, sn] = seed.split::<2>();
    Ok(midpoint_wh_given(s, u, y_su, &standard_normal(sz, d), &standard_normal(sn, d)))
}

/// `z` and `n` are standard normal; they are scaled to variances
/// `(u-s)/16` and `(u-s)/12` here.
pub fn midpoint_wh_given(
    s: f64,
    u: f64,
    y_su: &RescaledTriple,
    z: &[f64],
    n: &[f64],
) -> (RescaledTriple, RescaledTriple) {
    let len = u - s;
    let sd_z = (len / 16.0).sqrt();
    let sd_n = (len / 12.0).sqrt();
    let (w, h) = (&y_su.w, h_of(y_su));
    let d = w.len();
    let (mut w_l, mut w_r) = (Vec::with_capacity(d), Vec::with_capacity(d));
    let (mut h_l, mut h_r) = (Vec::with_capacity(d), Vec::with_capacity(d));
    let c_h = 1.5 / len;
    for i in 0..d {
        let zi = sd_z * z[i];
        let ni = sd_n * n[i];
        let mean_w = 0.5 * w[i] + c_h * h[i];
        w_l.push(mean_w + zi);
        w_r.push(w[i] - mean_w - zi);
        let mean_h = 0.125 * h[i] - 0.25 * len * zi;
        h_l.push(mean_h + 0.25 * len * ni);
        h_r.push(mean_h - 0.25 * len * ni);
    }
    (
        RescaledTriple { w: w_l, h: Some(h_l), k: None },
        RescaledTriple { w: w_r, h: Some(h_r), k: None },
    )
}

/// Split `Ȳ_{s,u}` at the midpoint for the full `(W, H̄, K̄)` triple.
pub fn midpoint_whk(
    s: f64,
    u: f64,
    y_su: &RescaledTriple,
    seed: Seed,
) -> Result<(RescaledTriple, RescaledTriple)> {
    check_positive_interval(s, u)?;
    y_su.require(LevyMode::SpaceTimeTime)?;
    let d = y_su.dim();
    let [sz, s1, s2] = seed.split::<3>();
    Ok(midpoint_whk_given(
        s,
        u,
        y_su,
        &standard_normal(sz, d),
        &standard_normal(s1, d),
        &standard_normal(s2, d),
    ))
}

/// `z`, `x1`, `x2` are standard normal; they are scaled to variances
/// `(u-s)/16`, `(u-s)/768` and `(u-s)/2880`.
pub fn midpoint_whk_given(
    s: f64,
    u: f64,
    y_su: &RescaledTriple,
    z: &[f64],
    x1: &[f64],
    x2: &[f64],
) -> (RescaledTriple, RescaledTriple) {
    let len = u - s;
    let sd_z = (len / 16.0).sqrt();
    let sd_1 = (len / 768.0).sqrt();
    let sd_2 = (len / 2880.0).sqrt();
    let (w, h, k) = (&y_su.w, h_of(y_su), k_of(y_su));
    let d = w.len();
    let mut left = RescaledTriple {
        w: Vec::with_capacity(d),
        h: Some(Vec::with_capacity(d)),
        k: Some(Vec::with_capacity(d)),
    };
    let mut right = left.clone();
    let c_wh = 1.5 / len;
    let c_hk = 15.0 / (8.0 * len);
    let len2 = len * len;
    for i in 0..d {
        let zi = sd_z * z[i];
        let x1i = sd_1 * x1[i];
        let x2i = sd_2 * x2[i];
        let mean_w = 0.5 * w[i] + c_wh * h[i];
        left.w.push(mean_w + zi);
        right.w.push(w[i] - mean_w - zi);

        let base_h = 0.125 * h[i] - 0.25 * len * zi;
        let odd_h = c_hk * k[i] + 0.5 * len * x1i;
        left.h.as_mut().unwrap().push(base_h + odd_h);
        right.h.as_mut().unwrap().push(base_h - odd_h);

        let base_k = k[i] / 32.0 - len2 / 8.0 * x1i;
        let odd_k = len2 / 4.0 * x2i;
        left.k.as_mut().unwrap().push(base_k + odd_k);
        right.k.as_mut().unwrap().push(base_k - odd_k);
    }
    (left, right)
}

// ---------------------------------------------------------------------------
// General-time interpolation

/// Brownian value at `r ∈ [s, u]` given the endpoint values.
pub fn interp_w(s: f64, r: f64, u: f64, w_s: &[f64], w_u: &[f64], seed: Seed) -> Result<Vec<f64>> {
    check_range("r", r, s, u)?;
    if r == s {
        return Ok(w_s.to_vec());
    }
    if r == u {
        return Ok(w_u.to_vec());
    }
    Ok(interp_w_given(s, r, u, w_s, w_u, &standard_normal(seed, w_s.len())))
}

pub fn interp_w_given(s: f64, r: f64, u: f64, w_s: &[f64], w_u: &[f64], xi: &[f64]) -> Vec<f64> {
    let len = u - s;
    let p = (r - s) / len;
    let q = (u - r) / len;
    let sd = (len * p * q).sqrt();
    (0..w_s.len()).map(|i| w_s[i] + p * (w_u[i] - w_s[i]) + sd * xi[i]).collect()
}

/// Single-indexed `Ȳ_{0,r}` for `(W, H̄)` given the state of the enclosing cell.
pub fn interp_wh(
    s: f64,
    r: f64,
    u: f64,
    y_s: &RescaledTriple,
    y_u: &RescaledTriple,
    y_su: &RescaledTriple,
    seed: Seed,
) -> Result<RescaledTriple> {
    check_range("r", r, s, u)?;
    for y in [y_s, y_u, y_su] {
        y.require(LevyMode::SpaceTime)?;
    }
    if r == s {
        return Ok(y_s.clone().restricted(LevyMode::SpaceTime));
    }
    if r == u {
        return Ok(y_u.clone().restricted(LevyMode::SpaceTime));
    }
    let d = y_su.dim();
    let [s1, s2] = seed.split::<2>();
    Ok(interp_wh_given(s, r, u, y_s, y_su, &standard_normal(s1, d), &standard_normal(s2, d)))
}

/// `(W_{s,r}, H̄_{s,r})` drawn from the conditional law given `Ȳ_{s,u}`,
/// then attached to `Ȳ_{0,s}`. Requires `s < r < u`.
pub fn interp_wh_given(
    s: f64,
    r: f64,
    u: f64,
    y_s: &RescaledTriple,
    y_su: &RescaledTriple,
    x1: &[f64],
    x2: &[f64],
) -> RescaledTriple {
    let len = u - s;
    let p = (r - s) / len;
    let q = (u - r) / len;
    let root = len.sqrt();
    let denom = (p * p * p + q * q * q).sqrt();
    let (sp, sq) = (p.sqrt(), q.sqrt());
    let p3 = p * p * p;
    let q3 = q * q * q;
    // Noise loadings, written in the normalised variables p and q.
    let w_x1 = root * (p3 * sp * sq + sp * q3 * sq) / denom;
    let h_x1 = -len * root * p3 * sp * sq / (2.0 * denom);
    let h_x2 = len * root * 3f64.sqrt() * p * sp * q * sq / (6.0 * denom);
    let (w, h) = (&y_su.w, h_of(y_su));
    let d = w.len();
    let mut y_sr = RescaledTriple { w: Vec::with_capacity(d), h: Some(Vec::with_capacity(d)), k: None };
    for i in 0..d {
        y_sr.w.push(p * w[i] + 6.0 * p * q * h[i] / len + w_x1 * x1[i]);
        y_sr.h.as_mut().unwrap().push(p3 * h[i] + h_x1 * x1[i] + h_x2 * x2[i]);
    }
    levy::attach(s, r, y_s, &y_sr, LevyMode::SpaceTime)
}

/// `E[Y_{s,r} | Y_{s,u}]` for `Y = (W, H, K)`.
pub fn conditional_mean_whk(s: f64, r: f64, u: f64, y_su: &LevyTriple) -> Result<LevyTriple> {
    check_positive_interval(s, u)?;
    check_range("r", r, s, u)?;
    y_su.require(LevyMode::SpaceTimeTime)?;
    Ok(conditional_mean_inner(s, r, u, y_su, Fault::None))
}

fn conditional_mean_inner(s: f64, r: f64, u: f64, y_su: &LevyTriple, fault: Fault) -> LevyTriple {
    let len = u - s;
    let p = (r - s) / len;
    let q = (u - r) / len;
    // (u+s)/2 - r, normalised
    let mid = 0.5 * (q - p);
    let hk = if fault == Fault::FlipHkMean { -30.0 } else { 30.0 };
    let (w, h, k) = (&y_su.w, y_su.h.as_ref().unwrap(), y_su.k.as_ref().unwrap());
    let d = w.len();
    LevyTriple {
        w: (0..d).map(|i| p * w[i] + 6.0 * p * q * h[i] + 120.0 * p * q * mid * k[i]).collect(),
        h: Some((0..d).map(|i| p * p * h[i] + hk * p * p * q * k[i]).collect()),
        k: Some((0..d).map(|i| p * p * p * k[i]).collect()),
    }
}

/// Covariance of `Y_{s,r}` given `Y_{s,u}` for `Y = (W, H, K)`.
pub fn conditional_cov_whk(s: f64, r: f64, u: f64) -> Result<CovMatrix3> {
    check_positive_interval(s, u)?;
    check_range("r", r, s, u)?;
    if r == s || r == u {
        return Ok(CovMatrix3::zero());
    }
    let len = u - s;
    let p = (r - s) / len;
    let q = (u - r) / len;
    let diff = p - q;
    let ww = len * p * q * (diff.powi(4) + 4.0 * p * p * q * q);
    let wh = -len * p.powi(3) * q * (p * p - 3.0 * p * q + 6.0 * q * q) / 2.0;
    let wk = len * p.powi(4) * q * diff / 12.0;
    // 1 - p³(p² + 2pq + 16q²) and 1 - p⁵ with the factor q taken out using
    // p + q = 1, so entries stay accurate to rounding as r approaches u.
    let hh = len * p * q / 12.0 * (3.0 * p.powi(4) - 6.0 * p.powi(3) * q + 10.0 * p * p * q * q + 5.0 * p * q.powi(3) + q.powi(4));
    let hk = -len * p.powi(5) * q / 24.0;
    let kk = len * p * q / 720.0 * (1.0 + p + p * p + p.powi(3) + p.powi(4));
    Ok(CovMatrix3([[ww, wh, wk], [wh, hh, hk], [wk, hk, kk]]))
}

/// Single-indexed `Ȳ_{0,r}` for `(W, H̄, K̄)` given the state of the enclosing cell.
pub fn interp_whk(
    s: f64,
    r: f64,
    u: f64,
    y_s: &RescaledTriple,
    y_u: &RescaledTriple,
    y_su: &RescaledTriple,
    seed: Seed,
) -> Result<RescaledTriple> {
    interp_whk_faulty(s, r, u, y_s, y_u, y_su, seed, Fault::None)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn interp_whk_faulty(
    s: f64,
    r: f64,
    u: f64,
    y_s: &RescaledTriple,
    y_u: &RescaledTriple,
    y_su: &RescaledTriple,
    seed: Seed,
    fault: Fault,
) -> Result<RescaledTriple> {
    check_positive_interval(s, u)?;
    check_range("r", r, s, u)?;
    for y in [y_s, y_u, y_su] {
        y.require(LevyMode::SpaceTimeTime)?;
    }
    if r == s {
        return Ok(y_s.clone());
    }
    if r == u {
        return Ok(y_u.clone());
    }
    let xi = standard_normal(seed, 3 * y_su.dim());
    interp_whk_given_inner(s, r, u, y_s, y_su, &xi, fault)
}

/// `xi` holds `3·d` standard normals laid out as `[ξ_W; ξ_H; ξ_K]`.
/// Requires `s < r < u`.
pub fn interp_whk_given(
    s: f64,
    r: f64,
    u: f64,
    y_s: &RescaledTriple,
    y_su: &RescaledTriple,
    xi: &[f64],
) -> Result<RescaledTriple> {
    interp_whk_given_inner(s, r, u, y_s, y_su, xi, Fault::None)
}

fn interp_whk_given_inner(
    s: f64,
    r: f64,
    u: f64,
    y_s: &RescaledTriple,
    y_su: &RescaledTriple,
    xi: &[f64],
    fault: Fault,
) -> Result<RescaledTriple> {
    let len = u - s;
    let d = y_su.dim();
    let root = conditional_cov_whk(s, r, u)?.sqrt_psd()?;
    let y_su_plain = levy::rescale(len, y_su)?;
    let mean = conditional_mean_inner(s, r, u, &y_su_plain, fault);
    let (mh, mk) = (mean.h.as_ref().unwrap(), mean.k.as_ref().unwrap());
    let rs = r - s;
    let mut y_sr = RescaledTriple {
        w: Vec::with_capacity(d),
        h: Some(Vec::with_capacity(d)),
        k: Some(Vec::with_capacity(d)),
    };
    for i in 0..d {
        let e = [xi[i], xi[d + i], xi[2 * d + i]];
        let noise: [f64; 3] =
            std::array::from_fn(|row| root[row][0] * e[0] + root[row][1] * e[1] + root[row][2] * e[2]);
        y_sr.w.push(mean.w[i] + noise[0]);
        y_sr.h.as_mut().unwrap().push(rs * (mh[i] + noise[1]));
        y_sr.k.as_mut().unwrap().push(rs * rs * (mk[i] + noise[2]));
    }
    Ok(levy::attach(s, r, y_s, &y_sr, LevyMode::SpaceTimeTime))
}
