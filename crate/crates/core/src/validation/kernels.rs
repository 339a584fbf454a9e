//! Exact second moments of Brownian functionals.
//!
//! Every quantity the tree produces is a Wiener integral `∫ k(v) dW_v` with a
//! polynomial kernel `k` supported on one interval, so covariances are
//! `∫ k₁ k₂ dv` and can be computed exactly by Gauss–Legendre quadrature.
//! Gaussian conditioning on top of that gives the conditional law of any set
//! of functionals given any other set, independently of the bridge formulas.

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    W,
    HBar,
    KBar,
    H,
    K,
}

/// A Wiener functional over `[a, b]` of one Brownian coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functional {
    pub kind: Kind,
    pub a: f64,
    pub b: f64,
}

impl Functional {
    pub fn w(a: f64, b: f64) -> Self {
        Functional { kind: Kind::W, a, b }
    }
    pub fn h_bar(a: f64, b: f64) -> Self {
        Functional { kind: Kind::HBar, a, b }
    }
    pub fn k_bar(a: f64, b: f64) -> Self {
        Functional { kind: Kind::KBar, a, b }
    }
    pub fn h(a: f64, b: f64) -> Self {
        Functional { kind: Kind::H, a, b }
    }
    pub fn k(a: f64, b: f64) -> Self {
        Functional { kind: Kind::K, a, b }
    }

    /// Kernel value at `v`; zero outside `[a, b]`.
    pub fn kernel(&self, v: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        if v < a || v > b {
            return 0.0;
        }
        let len = b - a;
        let h_bar = 0.5 * (a + b) - v;
        let k_bar = len * len / 12.0 - 0.5 * (b - v) * (v - a);
        match self.kind {
            Kind::W => 1.0,
            Kind::HBar => h_bar,
            Kind::KBar => k_bar,
            Kind::H => h_bar / len,
            Kind::K => k_bar / (len * len),
        }
    }
}

const GL_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// `E[X Y]` for two functionals of the same Brownian coordinate.
pub fn covariance(x: &Functional, y: &Functional) -> f64 {
    let lo = x.a.max(y.a);
    let hi = x.b.min(y.b);
    if hi <= lo {
        return 0.0;
    }
    // Kernels are quadratic, so the product is quartic: 3 nodes are exact.
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (0..3)
        .map(|i| {
            let v = mid + half * GL_NODES[i];
            GL_WEIGHTS[i] * x.kernel(v) * y.kernel(v)
        })
        .sum::<f64>()
        * half
}

pub fn covariance_matrix(xs: &[Functional], ys: &[Functional]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| ys.iter().map(|y| covariance(x, y)).collect()).collect()
}

/// Law of `outputs` given `inputs`: mean `coefficients · inputs`, covariance
/// `covariance`.
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    pub coefficients: Vec<Vec<f64>>,
    pub covariance: Vec<Vec<f64>>,
}

pub fn conditional_law(outputs: &[Functional], inputs: &[Functional]) -> ConditionalLaw {
    let to_mat = |m: Vec<Vec<f64>>, r: usize, c: usize| DMatrix::from_fn(r, c, |i, j| m[i][j]);
    let (no, ni) = (outputs.len(), inputs.len());
    let s_oo = to_mat(covariance_matrix(outputs, outputs), no, no);
    let s_oi = to_mat(covariance_matrix(outputs, inputs), no, ni);
    let s_ii = to_mat(covariance_matrix(inputs, inputs), ni, ni);
    let inv = s_ii.try_inverse().expect("conditioning functionals are degenerate");
    let coef = &s_oi * inv;
    let cov = s_oo - &coef * s_oi.transpose();
    let from_mat = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
    ConditionalLaw { coefficients: from_mat(&coef), covariance: from_mat(&cov) }
}
