use crate::error::{Error, Result};

/// Step-size controller state and tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub h: f64,
    pub err_prev: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Absolute tolerance; also the global tolerance ε of the CIR controller.
    pub atol: f64,
    pub rtol: f64,
    pub k_p: f64,
    pub k_i: f64,
    pub safety: f64,
    pub max_growth: f64,
    pub min_shrink: f64,
    pub err_floor: f64,
    /// Proportionality constant `C` of the CIR controller.
    pub cir_constant: f64,
}

impl ControllerState {
    pub fn new(h0: f64, h_min: f64, h_max: f64, atol: f64) -> Result<Self> {
        let s = ControllerState {
            h: h0,
            err_prev: 1.0,
            h_min,
            h_max,
            atol,
            rtol: 0.0,
            k_p: 0.1,
            k_i: 0.3,
            safety: 0.9,
            max_growth: 5.0,
            min_shrink: 0.1,
            err_floor: 1e-10,
            cir_constant: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.h_min && self.h_min <= self.h && self.h <= self.h_max && self.h_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < h_min <= h <= h_max, got h_min={}, h={}, h_max={}",
                self.h_min, self.h, self.h_max
            )));
        }
        if !(self.atol >= 0.0 && self.rtol >= 0.0 && self.atol + self.rtol > 0.0) {
            return Err(Error::Config("tolerances must be non-negative and not both zero".into()));
        }
        let gains = [self.k_p, self.k_i, self.safety, self.max_growth, self.min_shrink, self.err_floor, self.cir_constant];
        if !gains.iter().all(|g| g.is_finite() && *g >= 0.0) || self.err_floor <= 0.0 {
            return Err(Error::Config("controller gains must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, h: f64) -> f64 {
        h.clamp(self.h_min, self.h_max)
    }
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in v {
        sum += x * x;
        n += 1;
    }
    (sum / n.max(1) as f64).sqrt()
}

/// `‖fine - coarse‖_rms / (atol + rtol·‖fine‖_rms)`.
pub fn error_norm(fine: &[f64], coarse: &[f64], state: &ControllerState) -> f64 {
    let diff = rms(fine.iter().zip(coarse).map(|(a, b)| a - b));
    diff / (state.atol + state.rtol * rms(fine.iter().copied()))
}

/// PI step-size update; returns `(accept, h_next)` and updates `state`.
///
/// `h_next = h · safety · err^{-K_I/q} · (err_prev/err)^{K_P/q}`, `q = order + 1/2`,
/// with the change factor limited to `[min_shrink, max_growth]` and the result
/// clamped to `[h_min, h_max]`.
pub fn pi_controller(err: f64, state: &mut ControllerState, order: f64) -> (bool, f64) {
    let q = order + 0.5;
    let accept = err <= 1.0;
    let e = if err.is_nan() { f64::INFINITY } else { err.max(state.err_floor) };
    let factor = state.safety * e.powf(-state.k_i / q) * (state.err_prev / e).powf(state.k_p / q);
    let factor = if factor.is_nan() { state.min_shrink } else { factor.clamp(state.min_shrink, state.max_growth) };
    let h_next = state.clamp(state.h * factor);
    if accept {
        state.err_prev = e;
    }
    state.h = h_next;
    (accept, h_next)
}

/// `h = clamp(C·(x ε)^{2/3}, h_min, h_max)`; non-positive `x` gives `h_min`.
pub fn cir_step_controller(x: f64, eps: f64, bounds: &ControllerState) -> f64 {
    if !(x > 0.0) {
        return bounds.h_min;
    }
    bounds.clamp(bounds.cir_constant * (x * eps).powf(2.0 / 3.0))
}
