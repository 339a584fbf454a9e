//! The virtual Brownian tree.
//!
//! Queries are answered by a binary search over the interval normalised to
//! `[0, 1]`. Each level splits the current cell at its midpoint with a
//! midpoint bridge, keeping `Ȳ_{0,s}`, `Ȳ_{0,u}` and `Ȳ_{s,u}`; once the cell
//! width drops to the tolerance, a general bridge finishes the job. Nothing is
//! cached between calls, so memory use does not depend on the depth.
//!
//! Per-node seed use: a node with seed `ρ` splits it into `(ρ₁, ρ₂, ρ̂)`;
//! `ρ̂` drives the midpoint bridge, `ρ₁`/`ρ₂` become the seeds of the
//! left/right children, and the leaf interpolation draws from the leaf's `ρ`.
//! The root seed is split into `(descent, W, H, K)`.

use log::warn;

use crate::bridges::{self, Fault};
use crate::error::{Error, Result};
use crate::levy::{self, LevyMode, LevyTriple, RescaledTriple};
use crate::prng::{standard_normal, Seed};

/// Deepest supported tree; keeps every normalised vertex an exact `f64`.
pub const MAX_DEPTH: u32 = 52;

/// Everything that determines a Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    t0: f64,
    t1: f64,
    tol: f64,
    dim: usize,
    mode: LevyMode,
    seed: Seed,
    depth: u32,
    fault: Fault,
}

impl TreeConfig {
    pub fn new(t0: f64, t1: f64, tol: f64, dim: usize, mode: LevyMode, seed: Seed) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
            return Err(Error::Config(format!("need finite t0 < t1, got [{t0}, {t1}]")));
        }
        let len = t1 - t0;
        if !(tol > 0.0 && tol <= len) {
            return Err(Error::Config(format!("tolerance must lie in (0, {len}], got {tol}")));
        }
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        let depth = depth_for(len, tol)
            .ok_or_else(|| Error::Config(format!("tolerance {tol} needs more than {MAX_DEPTH} levels")))?;
        Ok(TreeConfig { t0, t1, tol, dim, mode, seed, depth, fault: Fault::None })
    }

    /// Same path parameters with a different seed.
    pub fn with_seed(&self, seed: Seed) -> Self {
        TreeConfig { seed, ..self.clone() }
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = fault;
        self
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn t1(&self) -> f64 {
        self.t1
    }
    pub fn tol(&self) -> f64 {
        self.tol
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn mode(&self) -> LevyMode {
        self.mode
    }
    pub fn seed(&self) -> Seed {
        self.seed
    }
    pub fn fault(&self) -> Fault {
        self.fault
    }

    /// `L = ⌈log2((t1 - t0)/ε)⌉`.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Width of the finest cells, `(t1 - t0)·2^-L ≤ ε`.
    pub fn leaf_width(&self) -> f64 {
        (self.t1 - self.t0) * pow2(-(self.depth as i32))
    }
}

/// Smallest `L` with `len·2^-L ≤ tol`.
fn depth_for(len: f64, tol: f64) -> Option<u32> {
    (0..=MAX_DEPTH).find(|&l| len * pow2(-(l as i32)) <= tol)
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// `k·2^-l`, exact for `k < 2^53`.
fn dyadic(k: u64, l: u32) -> f64 {
    k as f64 * pow2(-(l as i32))
}

/// Midpoint value plus each half's increment and seed.
type Split = (RescaledTriple, (RescaledTriple, Seed), (RescaledTriple, Seed));

/// Per-level state of the descent; times are normalised and `u - s = 2^-level`.
struct Node {
    level: u32,
    index: u64,
    y_s: RescaledTriple,
    y_u: RescaledTriple,
    y_su: RescaledTriple,
    seed: Seed,
}

impl Node {
    fn s(&self) -> f64 {
        dyadic(self.index, self.level)
    }
    fn u(&self) -> f64 {
        dyadic(self.index + 1, self.level)
    }
}

/// A Brownian path (with Lévy areas per the configured mode) on `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct VirtualBrownianTree {
    cfg: TreeConfig,
    sqrt_len: f64,
}

impl VirtualBrownianTree {
    pub fn new(cfg: TreeConfig) -> Self {
        let sqrt_len = (cfg.t1 - cfg.t0).sqrt();
        VirtualBrownianTree { cfg, sqrt_len }
    }

    pub fn config(&self) -> &TreeConfig {
        &self.cfg
    }

    pub fn depth(&self) -> u32 {
        self.cfg.depth
    }

    /// `(W, H, K)` over `[t0, r]`.
    pub fn eval_point(&self, r: f64) -> Result<LevyTriple> {
        let r_hat = self.normalise(r)?;
        self.eval_hat(r_hat)
    }

    /// `(W, H, K)` over `[t0, t0 + (t1 - t0)·k·2^-level]`, addressed exactly
    /// rather than through a floating-point time.
    pub fn eval_vertex(&self, k: u64, level: u32) -> Result<LevyTriple> {
        if level > MAX_DEPTH || k > (1u64 << level) {
            return Err(Error::Config(format!("no vertex {k} at level {level}")));
        }
        self.eval_hat(dyadic(k, level))
    }

    fn eval_hat(&self, r_hat: f64) -> Result<LevyTriple> {
        if r_hat == 0.0 {
            return Ok(LevyTriple::zeros(self.cfg.dim, self.cfg.mode));
        }
        let y = self.eval_normalised(r_hat)?;
        Ok(levy::rescale(r_hat, &y)?.scaled(self.sqrt_len))
    }

    /// `(W, H, K)` over `[r0, r1]`.
    ///
    /// Both endpoints strictly inside one leaf cell is allowed but logged: the
    /// pair is then not jointly distributed like Brownian motion.
    pub fn eval_interval(&self, r0: f64, r1: f64) -> Result<LevyTriple> {
        if !(r0 < r1) {
            return Err(Error::DegenerateInterval(format!("eval_interval needs r0 < r1, got [{r0}, {r1}]")));
        }
        let a = self.normalise(r0)?;
        let b = self.normalise(r1)?;
        if a == b {
            return Err(Error::DegenerateInterval(format!(
                "[{r0}, {r1}] collapses to a point after normalisation"
            )));
        }
        if let (Some(i), Some(j)) = (self.leaf_cell(a), self.leaf_cell(b)) {
            if i == j {
                warn!(
                    "query [{r0}, {r1}] lies inside a single leaf of width {}; \
                     use a tolerance no larger than the smallest query spacing",
                    self.cfg.leaf_width()
                );
            }
        }
        let y_a = if a == 0.0 {
            RescaledTriple::zeros(self.cfg.dim, self.cfg.mode)
        } else {
            self.eval_normalised(a)?
        };
        let y_b = self.eval_normalised(b)?;
        let y_ab = levy::subtract_unchecked(a, b, &y_a, &y_b, self.cfg.mode);
        Ok(levy::rescale(b - a, &y_ab)?.scaled(self.sqrt_len))
    }

    /// The `2^L + 1` tree vertices in `[t0, t1]`.
    pub fn dyadic_grid(&self) -> Vec<f64> {
        let l = self.cfg.depth;
        let len = self.cfg.t1 - self.cfg.t0;
        let n = 1u64 << l;
        let mut grid: Vec<f64> = (0..=n).map(|k| self.cfg.t0 + len * dyadic(k, l)).collect();
        grid[n as usize] = self.cfg.t1;
        grid
    }

    /// Values at every vertex of [`dyadic_grid`](Self::dyadic_grid), in order.
    ///
    /// Bitwise identical to calling `eval_point` at each vertex, at the cost
    /// of one pass over the tree rather than one descent per vertex.
    pub fn grid_values(&self) -> Result<Vec<LevyTriple>> {
        let n = 1usize << self.cfg.depth;
        let mut rescaled = Vec::with_capacity(n + 1);
        rescaled.push(RescaledTriple::zeros(self.cfg.dim, self.cfg.mode));
        let root = self.root();
        let top = root.y_u.clone();
        self.walk(root, &mut rescaled)?;
        rescaled.push(top);
        let l = self.cfg.depth;
        rescaled
            .iter()
            .enumerate()
            .map(|(k, y)| {
                if k == 0 {
                    return Ok(LevyTriple::zeros(self.cfg.dim, self.cfg.mode));
                }
                Ok(levy::rescale(dyadic(k as u64, l), y)?.scaled(self.sqrt_len))
            })
            .collect()
    }

    /// Index of the leaf cell strictly containing normalised `r_hat`, or
    /// `None` at a vertex.
    fn leaf_cell(&self, r_hat: f64) -> Option<u64> {
        let scaled = r_hat * pow2(self.cfg.depth as i32);
        let k = scaled.floor();
        (k != scaled).then_some(k as u64)
    }

    fn normalise(&self, r: f64) -> Result<f64> {
        let (t0, t1) = (self.cfg.t0, self.cfg.t1);
        if !(t0 <= r && r <= t1) {
            return Err(Error::OutOfRange { what: "query time", value: r, lo: t0, hi: t1 });
        }
        Ok(((r - t0) / (t1 - t0)).clamp(0.0, 1.0))
    }

    fn root(&self) -> Node {
        let d = self.cfg.dim;
        let mode = self.cfg.mode;
        let [descent, sw, sh, sk] = self.cfg.seed.split::<4>();
        let w = standard_normal(sw, d);
        let h = mode.has_h().then(|| scaled_normal(sh, d, 1.0 / 12.0));
        let k = mode.has_k().then(|| scaled_normal(sk, d, 1.0 / 720.0));
        let y_u = RescaledTriple { w, h, k };
        Node {
            level: 0,
            index: 0,
            y_s: RescaledTriple::zeros(d, mode),
            y_su: y_u.clone(),
            y_u,
            seed: descent,
        }
    }

    /// Split a node at its midpoint: `(ȳ_t, (ȳ_st, ρ₁), (ȳ_tu, ρ₂))`.
    fn split_node(&self, node: &Node) -> Result<Split> {
        let [rho1, rho2, rho_hat] = node.seed.split::<3>();
        let (s, u) = (node.s(), node.u());
        let t = dyadic(2 * node.index + 1, node.level + 1);
        let mode = self.cfg.mode;
        let (y_t, y_st, y_tu) = match mode {
            LevyMode::None => {
                let xi = standard_normal(rho_hat, self.cfg.dim);
                let w_t = bridges::midpoint_w_given(s, u, &node.y_s.w, &node.y_u.w, &xi);
                let y_t = RescaledTriple { w: w_t, h: None, k: None };
                // Increments are not needed on the none path.
                (y_t, RescaledTriple::zeros(0, mode), RescaledTriple::zeros(0, mode))
            }
            LevyMode::SpaceTime | LevyMode::SpaceTimeTime => {
                let (y_st, y_tu) = if mode == LevyMode::SpaceTime {
                    bridges::midpoint_wh(s, u, &node.y_su, rho_hat)?
                } else {
                    bridges::midpoint_whk(s, u, &node.y_su, rho_hat)?
                };
                let y_t = levy::attach(s, t, &node.y_s, &y_st, mode);
                (y_t, y_st, y_tu)
            }
        };
        Ok((y_t, (y_st, rho1), (y_tu, rho2)))
    }

    /// `Ȳ_{0, r_hat}` in normalised units, for `0 < r_hat ≤ 1`.
    fn eval_normalised(&self, r_hat: f64) -> Result<RescaledTriple> {
        let mut node = self.root();
        if r_hat == 1.0 {
            return Ok(node.y_u);
        }
        while node.level < self.cfg.depth {
            let t = dyadic(2 * node.index + 1, node.level + 1);
            let (y_t, (y_st, rho1), (y_tu, rho2)) = self.split_node(&node)?;
            if r_hat == t {
                return Ok(y_t);
            }
            node = if r_hat < t {
                Node { level: node.level + 1, index: 2 * node.index, y_s: node.y_s, y_u: y_t, y_su: y_st, seed: rho1 }
            } else {
                Node { level: node.level + 1, index: 2 * node.index + 1, y_s: y_t, y_u: node.y_u, y_su: y_tu, seed: rho2 }
            };
        }
        self.interpolate(&node, r_hat)
    }

    fn interpolate(&self, node: &Node, r_hat: f64) -> Result<RescaledTriple> {
        let (s, u) = (node.s(), node.u());
        if r_hat == s {
            return Ok(node.y_s.clone());
        }
        if r_hat == u {
            return Ok(node.y_u.clone());
        }
        match self.cfg.mode {
            LevyMode::None => {
                let w = bridges::interp_w(s, r_hat, u, &node.y_s.w, &node.y_u.w, node.seed)?;
                Ok(RescaledTriple { w, h: None, k: None })
            }
            LevyMode::SpaceTime => bridges::interp_wh(s, r_hat, u, &node.y_s, &node.y_u, &node.y_su, node.seed),
            LevyMode::SpaceTimeTime => bridges::interp_whk_faulty(
                s, r_hat, u, &node.y_s, &node.y_u, &node.y_su, node.seed, self.cfg.fault,
            ),
        }
    }

    /// In-order walk pushing the interior vertices below `node`.
    fn walk(&self, node: Node, out: &mut Vec<RescaledTriple>) -> Result<()> {
        if node.level == self.cfg.depth {
            return Ok(());
        }
        let (y_t, (y_st, rho1), (y_tu, rho2)) = self.split_node(&node)?;
        let (level, index) = (node.level + 1, 2 * node.index);
        let left = Node { level, index, y_s: node.y_s, y_u: y_t.clone(), y_su: y_st, seed: rho1 };
        self.walk(left, out)?;
        out.push(y_t.clone());
        let right = Node { level, index: index + 1, y_s: y_t, y_u: node.y_u, y_su: y_tu, seed: rho2 };
        self.walk(right, out)
    }
}

fn scaled_normal(seed: Seed, dim: usize, variance: f64) -> Vec<f64> {
    let sd = variance.sqrt();
    let mut v = standard_normal(seed, dim);
    v.iter_mut().for_each(|x| *x *= sd);
    v
}

/// `(W, H, K)` over `[cfg.t0, r]`.
pub fn eval_point(cfg: &TreeConfig, r: f64) -> Result<LevyTriple> {
    VirtualBrownianTree::new(cfg.clone()).eval_point(r)
}

/// `(W, H, K)` over `[r0, r1]`.
pub fn eval_interval(cfg: &TreeConfig, r0: f64, r1: f64) -> Result<LevyTriple> {
    VirtualBrownianTree::new(cfg.clone()).eval_interval(r0, r1)
}

/// The tree's vertex set mapped back to `[t0, t1]`.
pub fn dyadic_grid(cfg: &TreeConfig) -> Vec<f64> {
    VirtualBrownianTree::new(cfg.clone()).dyadic_grid()
}
