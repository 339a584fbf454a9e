use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bridges::{conditional_cov_whk, conditional_mean_whk, Fault};
use crate::error::{Error, Result};
use crate::levy::{self, LevyMode, LevyTriple, RescaledTriple};
use crate::prng::Seed;
use crate::tree::{TreeConfig, VirtualBrownianTree, MAX_DEPTH};

use super::kernels::{conditional_law, covariance, Functional, Kind};
use super::report::{MomentReport, Statistic, DEFAULT_Z_THRESHOLD};
use super::stats::{columns, excess_kurtosis, mean_se, product_moment, skewness};

/// Smallest seed count accepted by the Monte-Carlo suites.
pub const MIN_SEEDS: usize = 10_000;

const COMPONENTS: [(&str, Kind, f64); 3] = [("W", Kind::W, 1.0), ("H", Kind::H, 1.0 / 12.0), ("K", Kind::K, 1.0 / 720.0)];

fn require_seeds(n_seeds: usize) -> Result<()> {
    if n_seeds < MIN_SEEDS {
        return Err(Error::Config(format!("statistical suites need at least {MIN_SEEDS} seeds, got {n_seeds}")));
    }
    Ok(())
}

/// One row per seed `root.child(i)`, computed in parallel and kept in seed order.
fn sample_rows<F>(n_seeds: usize, root: Seed, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(Seed) -> Result<Vec<f64>> + Sync,
{
    (0..n_seeds as u64).into_par_iter().map(|i| f(root.child(i))).collect()
}

fn n_components(mode: LevyMode) -> usize {
    match mode {
        LevyMode::None => 1,
        LevyMode::SpaceTime => 2,
        LevyMode::SpaceTimeTime => 3,
    }
}

/// Column of component `c`, coordinate `i` in a flattened triple of width `d`.
fn col(c: usize, i: usize, d: usize) -> usize {
    c * d + i
}

/// Variances, means, same-coordinate and cross-dimension covariances, and
/// skewness/kurtosis of `(W, H, K)` over `[t0, r]` for each `r` in `times`.
///
/// Seeds are `cfg.seed().child(i)`.
pub fn moment_suite(cfg: &TreeConfig, n_seeds: usize, times: &[f64]) -> Result<MomentReport> {
    require_seeds(n_seeds)?;
    if times.is_empty() || times.iter().any(|&r| !(cfg.t0() < r && r <= cfg.t1())) {
        return Err(Error::Config(format!("query times must lie in ({}, {}]", cfg.t0(), cfg.t1())));
    }
    let (d, nc) = (cfg.dim(), n_components(cfg.mode()));
    let width = d * nc;
    let rows = sample_rows(n_seeds, cfg.seed(), |seed| {
        let tree = VirtualBrownianTree::new(cfg.with_seed(seed));
        let mut row = Vec::with_capacity(width * times.len());
        for &r in times {
            row.extend(tree.eval_point(r)?.flatten());
        }
        Ok(row)
    })?;
    let cols = columns(&rows);
    let n = n_seeds as f64;
    let z = DEFAULT_Z_THRESHOLD;
    let mut report = MomentReport::new("moments", n_seeds);
    for (q, &r) in times.iter().enumerate() {
        let delta = r - cfg.t0();
        let at = |c: usize, i: usize| &cols[q * width + col(c, i, d)];
        for i in 0..d {
            for (c, &(name, _, factor)) in COMPONENTS.iter().enumerate().take(nc) {
                let x = at(c, i);
                let tag = format!("r={r} {name}{i}");
                let (m, se) = mean_se(x);
                report.push(Statistic::z_test(format!("{tag} mean"), m, 0.0, se, z));
                let (v, se) = product_moment(x, x);
                report.push(Statistic::z_test(format!("{tag} var"), v, delta * factor, se, z));
                report.push(Statistic::z_test(format!("{tag} skew"), skewness(x), 0.0, (6.0 / n).sqrt(), z));
                report.push(Statistic::z_test(format!("{tag} exkurt"), excess_kurtosis(x), 0.0, (24.0 / n).sqrt(), z));
            }
            for a in 0..nc {
                for b in a + 1..nc {
                    let (m, se) = product_moment(at(a, i), at(b, i));
                    let name = format!("r={r} cov({}{i},{}{i})", COMPONENTS[a].0, COMPONENTS[b].0);
                    report.push(Statistic::z_test(name, m, 0.0, se, z));
                }
            }
        }
        for i in 0..d {
            for j in i + 1..d {
                for a in 0..nc {
                    for b in 0..nc {
                        let (m, se) = product_moment(at(a, i), at(b, j));
                        let name = format!("r={r} cov({}{i},{}{j})", COMPONENTS[a].0, COMPONENTS[b].0);
                        report.push(Statistic::z_test(name, m, 0.0, se, z));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Ordinary least squares `Y ≈ X B` without intercept; returns `B` and the
/// residuals.
fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let b = x
        .clone()
        .svd(true, true)
        .solve(y, 1e-14)
        .map_err(|e| Error::Config(format!("least squares failed: {e}")))?;
    let res = y - x * &b;
    Ok((b, res))
}

fn matrix_from_rows(rows: &[Vec<f64>], range: std::ops::Range<usize>) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), range.len(), |i, j| rows[i][range.start + j])
}

/// Regress `Y_{s,r}` on `Y_{s,u}` for `Y = (W, H, K)` and compare with the
/// closed-form conditional law.
///
/// Coefficients must agree within 4 standard errors. A residual covariance
/// entry larger than `1e-4·(u - s)` must agree within 3% of
/// `√(Σ_ii Σ_jj)`; smaller entries within 4 standard errors.
pub fn conditional_suite(seed: Seed, n_seeds: usize, s: f64, r: f64, u: f64) -> Result<MomentReport> {
    conditional_suite_with_fault(seed, n_seeds, s, r, u, Fault::None)
}

#[doc(hidden)]
pub fn conditional_suite_with_fault(
    seed: Seed,
    n_seeds: usize,
    s: f64,
    r: f64,
    u: f64,
    fault: Fault,
) -> Result<MomentReport> {
    require_seeds(n_seeds)?;
    if !(s < r && r <= u) {
        return Err(Error::Config(format!("conditional suite needs s < r <= u, got ({s}, {r}, {u})")));
    }
    // A single leaf: every query goes through the general-time bridge.
    let base = TreeConfig::new(s, u, u - s, 1, LevyMode::SpaceTimeTime, seed)?.with_fault(fault);
    let rows = sample_rows(n_seeds, seed, |child| {
        let tree = VirtualBrownianTree::new(base.with_seed(child));
        let mut row = tree.eval_point(u)?.flatten();
        row.extend(tree.eval_point(r)?.flatten());
        Ok(row)
    })?;
    let x = matrix_from_rows(&rows, 0..3);
    let y = matrix_from_rows(&rows, 3..6);
    let (beta, res) = least_squares(&x, &y)?;
    let xtx_inv = (x.transpose() * &x)
        .try_inverse()
        .ok_or_else(|| Error::Config("conditioning sample is degenerate".into()))?;

    let n = n_seeds;
    let len = u - s;
    let floor = 1e-12 * len;
    let sigma = conditional_cov_whk(s, r, u)?;
    let mut report = MomentReport::new(format!("conditional s={s} r={r} u={u}"), n);
    for i in 0..3 {
        let resid_var = res.column(i).norm_squared() / (n - 3) as f64;
        for j in 0..3 {
            let mut unit = LevyTriple::zeros(1, LevyMode::SpaceTimeTime);
            match j {
                0 => unit.w[0] = 1.0,
                1 => unit.h.as_mut().unwrap()[0] = 1.0,
                _ => unit.k.as_mut().unwrap()[0] = 1.0,
            }
            let target = conditional_mean_whk(s, r, u, &unit)?.flatten()[i];
            let se = (resid_var * xtx_inv[(j, j)]).sqrt();
            let name = format!("coef {}|{}", COMPONENTS[i].0, COMPONENTS[j].0);
            report.push(Statistic::within(name, beta[(j, i)], target, se, (DEFAULT_Z_THRESHOLD * se).max(floor)));
        }
    }
    let res_cols: Vec<Vec<f64>> = (0..3).map(|i| res.column(i).iter().copied().collect()).collect();
    for i in 0..3 {
        for j in i..3 {
            let (emp, se) = product_moment(&res_cols[i], &res_cols[j]);
            let target = sigma.get(i, j);
            let tol = if target.abs() > 1e-4 * len {
                0.03 * (sigma.get(i, i) * sigma.get(j, j)).sqrt()
            } else {
                DEFAULT_Z_THRESHOLD * se
            };
            let name = format!("resid cov({},{})", COMPONENTS[i].0, COMPONENTS[j].0);
            report.push(Statistic::within(name, emp, target, se, tol.max(floor)));
        }
    }
    Ok(report)
}

fn normalised(cfg: &TreeConfig, r: f64) -> f64 {
    (r - cfg.t0()) / (cfg.t1() - cfg.t0())
}

/// Whether some tree vertex lies in `[q, r]`.
pub fn vertex_between(cfg: &TreeConfig, q: f64, r: f64) -> bool {
    let scale = 2f64.powi(cfg.depth() as i32);
    (normalised(cfg, q) * scale).ceil() <= normalised(cfg, r) * scale
}

/// Joint second moments of the path sampled at arbitrary times.
///
/// `queries` must be strictly increasing in `(t0, t1]` with a tree vertex
/// between every consecutive pair; otherwise the joint law is not Brownian
/// and the suite refuses to run. Checks, on coordinate 0, every covariance
/// between components at two query times against the kernel oracle, and the
/// variances of the increments between consecutive queries.
pub fn nondyadic_joint_suite(cfg: &TreeConfig, n_seeds: usize, queries: &[f64]) -> Result<MomentReport> {
    require_seeds(n_seeds)?;
    let t0 = cfg.t0();
    if queries.is_empty() || queries.iter().any(|&q| !(t0 < q && q <= cfg.t1())) {
        return Err(Error::Config(format!("queries must lie in ({t0}, {}]", cfg.t1())));
    }
    for p in queries.windows(2) {
        if !(p[0] < p[1]) {
            return Err(Error::Config("queries must be strictly increasing".into()));
        }
        if !vertex_between(cfg, p[0], p[1]) {
            return Err(Error::Config(format!(
                "queries {} and {} share a leaf of width {}; their joint law is not Brownian",
                p[0],
                p[1],
                cfg.leaf_width()
            )));
        }
    }
    let nc = n_components(cfg.mode());
    let nq = queries.len();
    let rows = sample_rows(n_seeds, cfg.seed(), |seed| {
        let tree = VirtualBrownianTree::new(cfg.with_seed(seed));
        let mut row = Vec::with_capacity(nc * (2 * nq - 1));
        for &q in queries {
            row.extend(first_coordinate(&tree.eval_point(q)?));
        }
        for p in queries.windows(2) {
            row.extend(first_coordinate(&tree.eval_interval(p[0], p[1])?));
        }
        Ok(row)
    })?;
    let cols = columns(&rows);
    let z = DEFAULT_Z_THRESHOLD;
    let mut report = MomentReport::new("nondyadic joint", n_seeds);
    let functional = |c: usize, q: f64| Functional { kind: COMPONENTS[c].1, a: t0, b: q };
    for a in 0..nq {
        for b in a..nq {
            for ca in 0..nc {
                for cb in 0..nc {
                    if a == b && cb < ca {
                        continue;
                    }
                    let (qa, qb) = (queries[a], queries[b]);
                    let target = covariance(&functional(ca, qa), &functional(cb, qb));
                    let (m, se) = product_moment(&cols[a * nc + ca], &cols[b * nc + cb]);
                    let name = format!("cov({}@{qa},{}@{qb})", COMPONENTS[ca].0, COMPONENTS[cb].0);
                    report.push(Statistic::z_test(name, m, target, se, z));
                }
            }
        }
    }
    for (k, p) in queries.windows(2).enumerate() {
        for c in 0..nc {
            let x = &cols[(nq + k) * nc + c];
            let (v, se) = product_moment(x, x);
            let name = format!("var({} over [{},{}])", COMPONENTS[c].0, p[0], p[1]);
            report.push(Statistic::z_test(name, v, (p[1] - p[0]) * COMPONENTS[c].2, se, z));
        }
        // Increments are independent of the past.
        let (m, se) = product_moment(&cols[(nq + k) * nc], &cols[k * nc]);
        report.push(Statistic::z_test(format!("cov(W over [{},{}],W@{})", p[0], p[1], p[0]), m, 0.0, se, z));
    }
    Ok(report)
}

fn first_coordinate(y: &LevyTriple) -> Vec<f64> {
    let mut v = vec![y.w[0]];
    v.extend(y.h.as_ref().map(|h| h[0]));
    v.extend(y.k.as_ref().map(|k| k[0]));
    v
}

fn first_coordinate_rescaled(y: &RescaledTriple) -> Vec<f64> {
    let mut v = vec![y.w[0]];
    v.extend(y.h.as_ref().map(|h| h[0]));
    v.extend(y.k.as_ref().map(|k| k[0]));
    v
}

/// Outcome of probing two queries inside one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkageReport {
    /// The enclosing leaf `[v, v']`.
    pub leaf: (f64, f64),
    pub leaf_width: f64,
    /// Residual variance of `W_q` regressed on `W_v` and the leaf-local
    /// increments `Y_{v,v'}`, `Y_{v,r}` (just `W` without areas).
    pub residual_variance: f64,
    /// What that residual variance would be for Brownian motion.
    pub brownian_residual_variance: f64,
    /// `residual_variance < 1e-6·leaf_width`.
    pub fires: bool,
}

/// Show that two queries sharing a leaf are deterministically linked: `W_q`
/// is an affine function of the leaf endpoints and the value at `r`.
///
/// Both leaf-interior queries reuse the leaf's seed, so the tree cannot give
/// them the Brownian joint law; this is why queries must be separated by a
/// vertex.
pub fn same_leaf_linkage(cfg: &TreeConfig, n_seeds: usize, q: f64, r: f64) -> Result<LinkageReport> {
    if n_seeds < 10 {
        return Err(Error::Config("linkage detector needs at least 10 seeds".into()));
    }
    let scale = 2f64.powi(cfg.depth() as i32);
    let (a, b) = (normalised(cfg, q) * scale, normalised(cfg, r) * scale);
    let inside = |x: f64| x.floor() != x && x > 0.0 && x < scale;
    if !(inside(a) && inside(b) && a.floor() == b.floor() && q != r) {
        return Err(Error::Config(format!("{q} and {r} are not distinct interior points of one leaf")));
    }
    let k = a.floor() as u64;
    let level = cfg.depth();
    let len = cfg.t1() - cfg.t0();
    let v0 = cfg.t0() + len * (k as f64 / scale);
    let v1 = cfg.t0() + len * ((k + 1) as f64 / scale);
    let mode = cfg.mode();
    let t0 = cfg.t0();
    let rows = sample_rows(n_seeds, cfg.seed(), |seed| {
        let tree = VirtualBrownianTree::new(cfg.with_seed(seed));
        let at = |y: LevyTriple, t: f64| -> Result<RescaledTriple> {
            if t == t0 {
                Ok(RescaledTriple::zeros(y.dim(), mode))
            } else {
                levy::unrescale(t - t0, &y)
            }
        };
        let y_v = at(tree.eval_vertex(k, level)?, v0)?;
        let y_v1 = at(tree.eval_vertex(k + 1, level)?, v1)?;
        let y_r = at(tree.eval_point(r)?, r)?;
        // Leaf-local increments; with areas the leaf bridge draws from all
        // of (W, H, K), so all of them enter.
        let leaf = levy::single_index_subtract(v0 - t0, v1 - t0, &y_v, &y_v1, mode)?;
        let to_r = levy::single_index_subtract(v0 - t0, r - t0, &y_v, &y_r, mode)?;
        let mut row = vec![y_v.w[0]];
        row.extend(first_coordinate_rescaled(&leaf));
        row.extend(first_coordinate_rescaled(&to_r));
        row.push(tree.eval_point(q)?.w[0]);
        Ok(row)
    })?;
    let p = rows[0].len() - 1;
    let x = matrix_from_rows(&rows, 0..p);
    let y = matrix_from_rows(&rows, p..p + 1);
    let (_, res) = least_squares(&x, &y)?;
    let residual_variance = res.norm_squared() / (n_seeds - p) as f64;
    let mut inputs = Vec::new();
    if v0 > t0 {
        inputs.push(Functional::w(t0, v0));
    }
    for (a, b) in [(v0, v1), (v0, r)] {
        inputs.extend((0..n_components(mode)).map(|c| Functional { kind: COMPONENTS[c].1, a, b }));
    }
    let law = conditional_law(&[Functional::w(t0, q)], &inputs);
    let leaf_width = cfg.leaf_width();
    Ok(LinkageReport {
        leaf: (v0, v1),
        leaf_width,
        residual_variance,
        brownian_residual_variance: law.covariance[0][0],
        fires: residual_variance < 1e-6 * leaf_width,
    })
}

/// Outcome of comparing one seed at two depths.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub coarse_depth: u32,
    pub fine_depth: u32,
    pub vertices: usize,
    /// Largest `|a - b| / max(|a|, |b|)` over all components at the coarse
    /// vertices (zero when bitwise equal).
    pub max_relative_difference: f64,
    /// Whether the value at the non-dyadic probe changed with depth. Allowed:
    /// the leaf it falls in changes.
    pub nondyadic_differs: bool,
    pub pass: bool,
}

/// Values at the depth-`l1` vertices must not change when the same seed is
/// run at depth `l2 > l1`.
pub fn refinement_invariance_suite(base: &TreeConfig, l1: u32, l2: u32) -> Result<RefinementReport> {
    if !(l1 < l2 && l2 <= MAX_DEPTH) || l1 > 24 {
        return Err(Error::Config(format!("need l1 < l2 <= {MAX_DEPTH} and l1 <= 24, got {l1}, {l2}")));
    }
    let len = base.t1() - base.t0();
    let at_depth = |l: u32| -> Result<VirtualBrownianTree> {
        let cfg = TreeConfig::new(base.t0(), base.t1(), len * 2f64.powi(-(l as i32)), base.dim(), base.mode(), base.seed())?;
        Ok(VirtualBrownianTree::new(cfg))
    };
    let (coarse, fine) = (at_depth(l1)?, at_depth(l2)?);
    let mut worst: f64 = 0.0;
    let n = 1u64 << l1;
    for k in 0..=n {
        let a = coarse.eval_vertex(k, l1)?.flatten();
        let b = fine.eval_vertex(k, l1)?.flatten();
        for (x, y) in a.iter().zip(&b) {
            if x != y {
                worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
            }
        }
    }
    let probe = base.t0() + 0.3 * len;
    let nondyadic_differs = coarse.eval_point(probe)? != fine.eval_point(probe)?;
    Ok(RefinementReport {
        coarse_depth: l1,
        fine_depth: l2,
        vertices: n as usize + 1,
        max_relative_difference: worst,
        nondyadic_differs,
        pass: worst <= 1e-15,
    })
}

/// The midpoint conditional covariance and its Cholesky factor against the
/// closed forms, for `u - s = 1`.
pub fn midpoint_closed_form() -> Result<MomentReport> {
    let sigma = conditional_cov_whk(0.0, 0.5, 1.0)?;
    let expected = [
        [1.0 / 16.0, -1.0 / 32.0, 0.0],
        [-1.0 / 32.0, 13.0 / 768.0, -1.0 / 1536.0],
        [0.0, -1.0 / 1536.0, 31.0 / 46080.0],
    ];
    let expected_chol = [
        [0.25, 0.0, 0.0],
        [-0.125, 1.0 / 768f64.sqrt(), 0.0],
        [0.0, -1.0 / 3072f64.sqrt(), 1.0 / 2880f64.sqrt()],
    ];
    let chol = sigma.cholesky().ok_or(Error::NotPositiveSemidefinite(sigma.eigenvalues()[0]))?;
    let mut report = MomentReport::new("midpoint closed form", 0);
    for i in 0..3 {
        for j in 0..=i {
            let (a, b) = (COMPONENTS[i].0, COMPONENTS[j].0);
            report.push(Statistic::within(format!("sigma({a},{b})"), sigma.get(i, j), expected[i][j], 0.0, 1e-12));
            report.push(Statistic::within(format!("chol({a},{b})"), chol[i][j], expected_chol[i][j], 0.0, 1e-12));
        }
    }
    Ok(report)
}
