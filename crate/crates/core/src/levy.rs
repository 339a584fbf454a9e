//! Brownian increments and Lévy areas, and the exact algebra between them.
//!
//! Over an interval `[s, t]` we carry the increment `W_{s,t}`, the space-time
//! Lévy area `H_{s,t}` (time average of the Brownian bridge) and the
//! space-time-time Lévy area `K_{s,t}` (bridge weighted by `(s+t)/2 - r`).
//! The *rescaled* areas `H̄ = (t-s) H` and `K̄ = (t-s)^2 K` are the ones that
//! concatenate cleanly, so all internal algebra works on [`RescaledTriple`].
//!
//! Triples do not store the interval they describe; callers pass the times.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which Lévy areas are generated alongside the increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum LevyMode {
    /// Increments only.
    None,
    /// Increments and `H`.
    SpaceTime,
    /// Increments, `H` and `K`.
    #[default]
    SpaceTimeTime,
}

impl LevyMode {
    pub fn has_h(self) -> bool {
        self >= LevyMode::SpaceTime
    }

    pub fn has_k(self) -> bool {
        self == LevyMode::SpaceTimeTime
    }

    pub fn short_name(self) -> &'static str {
        match self {
            LevyMode::None => "none",
            LevyMode::SpaceTime => "st",
            LevyMode::SpaceTimeTime => "stt",
        }
    }
}

impl fmt::Display for LevyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for LevyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(LevyMode::None),
            "st" | "space-time" => Ok(LevyMode::SpaceTime),
            "stt" | "space-time-time" => Ok(LevyMode::SpaceTimeTime),
            other => Err(Error::Config(format!(
                "unknown levy mode {other:?} (expected none, st or stt)"
            ))),
        }
    }
}

/// Closed time interval `[s, u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInterval {
    s: f64,
    u: f64,
}

impl TimeInterval {
    pub fn new(s: f64, u: f64) -> Result<Self> {
        if !s.is_finite() || !u.is_finite() {
            return Err(Error::DegenerateInterval(format!("[{s}, {u}] is not finite")));
        }
        if s > u {
            return Err(Error::DegenerateInterval(format!("[{s}, {u}] has s > u")));
        }
        Ok(TimeInterval { s, u })
    }

    pub fn start(&self) -> f64 {
        self.s
    }

    pub fn end(&self) -> f64 {
        self.u
    }

    pub fn len(&self) -> f64 {
        self.u - self.s
    }

    pub fn is_empty(&self) -> bool {
        self.u == self.s
    }

    pub fn contains(&self, t: f64) -> bool {
        self.s <= t && t <= self.u
    }
}

/// `(W, H, K)` over an interval, with `H` and `K` in units of √time.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriple {
    pub w: Vec<f64>,
    pub h: Option<Vec<f64>>,
    pub k: Option<Vec<f64>>,
}

/// `(W, H̄, K̄)` over an interval: `H̄ = δ·H`, `K̄ = δ²·K` for interval length δ.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledTriple {
    pub w: Vec<f64>,
    pub h: Option<Vec<f64>>,
    pub k: Option<Vec<f64>>,
}

macro_rules! triple_common {
    ($ty:ident) => {
        impl $ty {
            pub fn zeros(dim: usize, mode: LevyMode) -> Self {
                $ty {
                    w: vec![0.0; dim],
                    h: mode.has_h().then(|| vec![0.0; dim]),
                    k: mode.has_k().then(|| vec![0.0; dim]),
                }
            }

            pub fn dim(&self) -> usize {
                self.w.len()
            }

            /// The richest mode this triple is populated for.
            pub fn mode(&self) -> LevyMode {
                match (&self.h, &self.k) {
                    (Some(_), Some(_)) => LevyMode::SpaceTimeTime,
                    (Some(_), None) => LevyMode::SpaceTime,
                    _ => LevyMode::None,
                }
            }

            /// Drop components beyond `mode`.
            pub fn restricted(mut self, mode: LevyMode) -> Self {
                if !mode.has_h() {
                    self.h = None;
                }
                if !mode.has_k() {
                    self.k = None;
                }
                self
            }

            /// All components in `w, h, k` order.
            pub fn flatten(&self) -> Vec<f64> {
                let mut out = self.w.clone();
                out.extend(self.h.iter().flatten());
                out.extend(self.k.iter().flatten());
                out
            }

            pub(crate) fn require(&self, mode: LevyMode) -> Result<()> {
                if self.mode() < mode {
                    return Err(Error::ModeMismatch { expected: mode, found: self.mode() });
                }
                Ok(())
            }
        }
    };
}

triple_common!(LevyTriple);
triple_common!(RescaledTriple);

impl LevyTriple {
    /// Multiply every component by `c` (Brownian scaling).
    pub fn scaled(mut self, c: f64) -> Self {
        scale_in_place(&mut self.w, c);
        if let Some(h) = &mut self.h {
            scale_in_place(h, c);
        }
        if let Some(k) = &mut self.k {
            scale_in_place(k, c);
        }
        self
    }
}

fn scale_in_place(v: &mut [f64], c: f64) {
    for x in v {
        *x *= c;
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(())
}

/// Brownian bridge value `B_t^{s,u} = W_{s,t} - (t-s)/(u-s) W_{s,u}`; zero when `s == u`.
pub fn bridge_value(s: f64, t: f64, u: f64, w_st: &[f64], w_su: &[f64]) -> Result<Vec<f64>> {
    if !(s <= t && t <= u) {
        return Err(Error::OutOfRange { what: "t", value: t, lo: s, hi: u });
    }
    check_dims(w_st, w_su)?;
    if s == u {
        return Ok(vec![0.0; w_st.len()]);
    }
    let frac = (t - s) / (u - s);
    Ok(w_st.iter().zip(w_su).map(|(a, b)| a - frac * b).collect())
}

/// Chen's relation: concatenate `[s,t]` and `[t,u]` into `[s,u]`.
pub fn chen_combine(
    s: f64,
    t: f64,
    u: f64,
    left: &RescaledTriple,
    right: &RescaledTriple,
    mode: LevyMode,
) -> Result<RescaledTriple> {
    if !(s < t && t < u) {
        return Err(Error::DegenerateInterval(format!(
            "chen_combine needs s < t < u, got ({s}, {t}, {u})"
        )));
    }
    left.require(mode)?;
    right.require(mode)?;
    check_dims(&left.w, &right.w)?;
    Ok(combine_unchecked(s, t, u, left, right, mode))
}

pub(crate) fn combine_unchecked(
    s: f64,
    t: f64,
    u: f64,
    left: &RescaledTriple,
    right: &RescaledTriple,
    mode: LevyMode,
) -> RescaledTriple {
    let d = left.dim();
    let frac = (t - s) / (u - s);
    let w: Vec<f64> = (0..d).map(|i| left.w[i] + right.w[i]).collect();
    if !mode.has_h() {
        return RescaledTriple { w, h: None, k: None };
    }
    let bridge: Vec<f64> = (0..d).map(|i| left.w[i] - frac * w[i]).collect();
    let (hl, hr) = (left.h.as_ref().unwrap(), right.h.as_ref().unwrap());
    let half_len = 0.5 * (u - s);
    let h: Vec<f64> = (0..d).map(|i| hl[i] + hr[i] + half_len * bridge[i]).collect();
    let k = mode.has_k().then(|| {
        let (kl, kr) = (left.k.as_ref().unwrap(), right.k.as_ref().unwrap());
        let (a, b) = (u - t, t - s);
        let c = (a * a - b * b) / 12.0;
        (0..d)
            .map(|i| kl[i] + kr[i] + 0.5 * a * hl[i] - 0.5 * b * hr[i] + c * bridge[i])
            .collect()
    });
    RescaledTriple { w, h: Some(h), k }
}

/// Recover `Ȳ_{t,u}` from the single-indexed values `Ȳ_{0,t}` and `Ȳ_{0,u}`.
pub fn single_index_subtract(
    t: f64,
    u: f64,
    y_t: &RescaledTriple,
    y_u: &RescaledTriple,
    mode: LevyMode,
) -> Result<RescaledTriple> {
    if !(0.0 <= t && t < u) {
        return Err(Error::DegenerateInterval(format!(
            "single_index_subtract needs 0 <= t < u, got ({t}, {u})"
        )));
    }
    y_t.require(mode)?;
    y_u.require(mode)?;
    check_dims(&y_t.w, &y_u.w)?;
    Ok(subtract_unchecked(t, u, y_t, y_u, mode))
}

pub(crate) fn subtract_unchecked(
    t: f64,
    u: f64,
    y_t: &RescaledTriple,
    y_u: &RescaledTriple,
    mode: LevyMode,
) -> RescaledTriple {
    let d = y_t.dim();
    let w: Vec<f64> = (0..d).map(|i| y_u.w[i] - y_t.w[i]).collect();
    if !mode.has_h() {
        return RescaledTriple { w, h: None, k: None };
    }
    // u W_t - t W_u
    let cross: Vec<f64> = (0..d).map(|i| u * y_t.w[i] - t * y_u.w[i]).collect();
    let (ht, hu) = (y_t.h.as_ref().unwrap(), y_u.h.as_ref().unwrap());
    let h: Vec<f64> = (0..d).map(|i| hu[i] - ht[i] - 0.5 * cross[i]).collect();
    let k = mode.has_k().then(|| {
        let (kt, ku) = (y_t.k.as_ref().unwrap(), y_u.k.as_ref().unwrap());
        let c = (u - 2.0 * t) / 12.0;
        (0..d)
            .map(|i| ku[i] - kt[i] - 0.5 * (u - t) * ht[i] + 0.5 * t * h[i] - c * cross[i])
            .collect()
    });
    RescaledTriple { w, h: Some(h), k }
}

/// `Ȳ_{0,r}` from `Ȳ_{0,s}` and `Ȳ_{s,r}`; the `s = 0` case is the identity.
pub(crate) fn attach(
    s: f64,
    r: f64,
    y_s: &RescaledTriple,
    y_sr: &RescaledTriple,
    mode: LevyMode,
) -> RescaledTriple {
    if s == 0.0 {
        return y_sr.clone();
    }
    combine_unchecked(0.0, s, r, y_s, y_sr, mode)
}

/// Convert rescaled areas over an interval of length `h` to `(W, H, K)`.
pub fn rescale(h: f64, y: &RescaledTriple) -> Result<LevyTriple> {
    if !(h > 0.0) {
        return Err(Error::DegenerateInterval(format!("rescale needs h > 0, got {h}")));
    }
    let inv = 1.0 / h;
    let inv2 = inv * inv;
    Ok(LevyTriple {
        w: y.w.clone(),
        h: y.h.as_ref().map(|v| v.iter().map(|x| x * inv).collect()),
        k: y.k.as_ref().map(|v| v.iter().map(|x| x * inv2).collect()),
    })
}

/// Inverse of [`rescale`].
pub fn unrescale(h: f64, y: &LevyTriple) -> Result<RescaledTriple> {
    if !(h > 0.0) {
        return Err(Error::DegenerateInterval(format!("unrescale needs h > 0, got {h}")));
    }
    Ok(RescaledTriple {
        w: y.w.clone(),
        h: y.h.as_ref().map(|v| v.iter().map(|x| x * h).collect()),
        k: y.k.as_ref().map(|v| v.iter().map(|x| x * h * h).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triple(w: f64, h: f64, k: f64) -> RescaledTriple {
        RescaledTriple { w: vec![w], h: Some(vec![h]), k: Some(vec![k]) }
    }

    #[test]
    fn bridge_value_examples() {
        assert_eq!(bridge_value(0.0, 0.0, 2.0, &[0.0], &[1.3]).unwrap(), vec![0.0]);
        assert_eq!(bridge_value(0.0, 2.0, 2.0, &[1.3], &[1.3]).unwrap(), vec![0.0]);
        assert_eq!(bridge_value(0.0, 1.0, 2.0, &[1.0], &[1.0]).unwrap(), vec![0.5]);
        assert_eq!(bridge_value(1.0, 1.0, 1.0, &[0.0], &[0.0]).unwrap(), vec![0.0]);
        assert!(bridge_value(0.0, 3.0, 2.0, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn combine_zero_is_zero() {
        let z = RescaledTriple::zeros(3, LevyMode::SpaceTimeTime);
        let out = chen_combine(0.0, 0.5, 1.0, &z, &z, LevyMode::SpaceTimeTime).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn combine_hand_examples() {
        let out = chen_combine(
            0.0,
            1.0,
            2.0,
            &triple(1.0, 0.0, 0.0),
            &triple(0.0, 0.0, 0.0),
            LevyMode::SpaceTimeTime,
        )
        .unwrap();
        assert_eq!(out.h.unwrap()[0], 0.5);

        let out = chen_combine(
            0.0,
            1.0,
            2.0,
            &triple(0.0, 1.0, 0.0),
            &triple(0.0, 1.0, 0.0),
            LevyMode::SpaceTimeTime,
        )
        .unwrap();
        assert_eq!(out.k.unwrap()[0], 0.0);
    }

    #[test]
    fn combine_rejects_degenerate_split() {
        let z = RescaledTriple::zeros(1, LevyMode::SpaceTime);
        assert!(chen_combine(0.0, 0.0, 1.0, &z, &z, LevyMode::SpaceTime).is_err());
        assert!(chen_combine(0.0, 1.0, 1.0, &z, &z, LevyMode::SpaceTime).is_err());
    }

    #[test]
    fn combine_rejects_underpopulated_triples() {
        let z = RescaledTriple::zeros(1, LevyMode::SpaceTime);
        assert!(matches!(
            chen_combine(0.0, 0.5, 1.0, &z, &z, LevyMode::SpaceTimeTime),
            Err(Error::ModeMismatch { .. })
        ));
    }

    #[test]
    fn combine_mode_none_only_adds_w() {
        let a = RescaledTriple::zeros(2, LevyMode::None);
        let mut b = a.clone();
        b.w = vec![1.0, -2.0];
        let out = chen_combine(0.0, 0.25, 1.0, &b, &b, LevyMode::None).unwrap();
        assert_eq!(out.w, vec![2.0, -4.0]);
        assert!(out.h.is_none() && out.k.is_none());
    }

    #[test]
    fn subtract_hand_examples() {
        let out = single_index_subtract(
            1.0,
            2.0,
            &triple(1.0, 0.0, 0.0),
            &triple(1.0, 0.0, 0.0),
            LevyMode::SpaceTimeTime,
        )
        .unwrap();
        assert_eq!(out.h.as_ref().unwrap()[0], -0.5);
        assert_eq!(out.w[0], 0.0);

        // Zero left triple: H̄ and K̄ of [t,u] pick up only the y_u and cross terms.
        let y_u = triple(0.7, 0.2, -0.1);
        let out = single_index_subtract(
            0.5,
            2.0,
            &RescaledTriple::zeros(1, LevyMode::SpaceTimeTime),
            &y_u,
            LevyMode::SpaceTimeTime,
        )
        .unwrap();
        let h = 0.2 + 0.5 * 0.5 * 0.7;
        let k = -0.1 + 0.25 * h - (1.0 / 12.0) * (-0.5 * 0.7);
        assert!((out.h.as_ref().unwrap()[0] - h).abs() < 1e-15);
        assert!((out.k.as_ref().unwrap()[0] - k).abs() < 1e-15);
    }

    #[test]
    fn subtract_rejects_reversed() {
        let z = RescaledTriple::zeros(1, LevyMode::SpaceTime);
        assert!(single_index_subtract(1.0, 1.0, &z, &z, LevyMode::SpaceTime).is_err());
        assert!(single_index_subtract(2.0, 1.0, &z, &z, LevyMode::SpaceTime).is_err());
    }

    #[test]
    fn rescale_examples() {
        let y = triple(0.3, 1.0, 1.0);
        let out = rescale(2.0, &y).unwrap();
        assert_eq!(out.w, vec![0.3]);
        assert_eq!(out.h, Some(vec![0.5]));
        assert_eq!(out.k, Some(vec![0.25]));
        let id = rescale(1.0, &y).unwrap();
        assert_eq!(id.flatten(), y.flatten());
        assert!(rescale(0.0, &y).is_err());
        assert!(rescale(-1.0, &y).is_err());

        let back = unrescale(2.0, &out).unwrap();
        assert_eq!(back, y);
        assert!(unrescale(0.0, &out).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("none".parse::<LevyMode>().unwrap(), LevyMode::None);
        assert_eq!("st".parse::<LevyMode>().unwrap(), LevyMode::SpaceTime);
        assert_eq!("space-time-time".parse::<LevyMode>().unwrap(), LevyMode::SpaceTimeTime);
        assert!("bogus".parse::<LevyMode>().is_err());
        assert!(LevyMode::None < LevyMode::SpaceTime);
        assert!(LevyMode::SpaceTime < LevyMode::SpaceTimeTime);
    }

    fn arb_triple(d: usize) -> impl Strategy<Value = RescaledTriple> {
        (
            prop::collection::vec(-1.0f64..1.0, d),
            prop::collection::vec(-1.0f64..1.0, d),
            prop::collection::vec(-1.0f64..1.0, d),
        )
            .prop_map(|(w, h, k)| RescaledTriple { w, h: Some(h), k: Some(k) })
    }

    fn max_diff(a: &RescaledTriple, b: &RescaledTriple) -> f64 {
        a.flatten()
            .iter()
            .zip(b.flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn subtract_inverts_combine(
            y_t in arb_triple(3),
            y_u in arb_triple(3),
            t in 0.01f64..1.0,
            gap in 0.01f64..1.0,
        ) {
            let u = t + gap;
            let mode = LevyMode::SpaceTimeTime;
            let y_tu = single_index_subtract(t, u, &y_t, &y_u, mode).unwrap();
            let back = chen_combine(0.0, t, u, &y_t, &y_tu, mode).unwrap();
            prop_assert!(max_diff(&back, &y_u) < 1e-12);
        }

        #[test]
        fn chen_is_associative(
            a in arb_triple(2),
            b in arb_triple(2),
            c in arb_triple(2),
            cuts in prop::array::uniform3(0.05f64..1.0),
        ) {
            let s = 0.3;
            let t = s + cuts[0];
            let r = t + cuts[1];
            let u = r + cuts[2];
            let mode = LevyMode::SpaceTimeTime;
            let left = chen_combine(s, r, u, &chen_combine(s, t, r, &a, &b, mode).unwrap(), &c, mode).unwrap();
            let right = chen_combine(s, t, u, &a, &chen_combine(t, r, u, &b, &c, mode).unwrap(), mode).unwrap();
            prop_assert!(max_diff(&left, &right) < 1e-12);
        }

        #[test]
        fn w_is_exactly_additive(a in arb_triple(2), b in arb_triple(2), t in 0.1f64..0.9) {
            let out = chen_combine(0.0, t, 1.0, &a, &b, LevyMode::SpaceTimeTime).unwrap();
            for i in 0..2 {
                prop_assert_eq!(out.w[i], a.w[i] + b.w[i]);
            }
        }

        #[test]
        fn rescale_roundtrip(y in arb_triple(2), h in 1e-3f64..1e3) {
            let back = unrescale(h, &rescale(h, &y).unwrap()).unwrap();
            let scale = 1.0 + h * h;
            prop_assert!(max_diff(&back, &y) < 1e-12 * scale);
        }
    }
}
