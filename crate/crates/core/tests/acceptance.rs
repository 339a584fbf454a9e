//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Run a subset with `VBT_CRITERIA=1,5,6 cargo test --test acceptance`.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use vbt_core::levy::{self, chen_combine};
use vbt_core::solvers::experiments::{gbm_em_soc, ou_em_soc, CirExperiment, GbmParams, OuParams, Sweep};
use vbt_core::solvers::{fit_line, IntegratedBm, Stepper, TripleIntegratedBm};
use vbt_core::validation::{
    conditional_suite, midpoint_closed_form, moment_suite, nondyadic_joint_suite, quadrature_comparison,
    refinement_invariance_suite, same_leaf_linkage,
};
use vbt_core::{LevyMode, LevyTriple, Seed, TreeConfig, VirtualBrownianTree};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * 2f64.powi(-53)
}

fn tree(tol: f64, dim: usize, mode: LevyMode, seed: u64) -> VirtualBrownianTree {
    VirtualBrownianTree::new(TreeConfig::new(0.0, 1.0, tol, dim, mode, Seed::from_u64(seed)).unwrap())
}

fn closed_form() -> Outcome {
    let r = midpoint_closed_form().map_err(|e| e.to_string())?;
    let worst = r.statistics.iter().map(|s| (s.empirical - s.target).abs()).fold(0.0, f64::max);
    check(r.passed(), format!("max |difference| {worst:.2e} over Σ and its Cholesky factor"))
}

fn unconditional_moments() -> Outcome {
    let cfg = TreeConfig::new(0.0, 1.0, 2f64.powi(-10), 2, LevyMode::SpaceTimeTime, Seed::from_u64(2)).unwrap();
    let r = moment_suite(&cfg, 100_000, &[0.25, 0.61, 1.0]).map_err(|e| e.to_string())?;
    let failed: Vec<&str> = r.failures().map(|s| s.name.as_str()).collect();
    check(
        r.passed(),
        format!("{} statistics, max |z| {:.2}, failing {:?}", r.statistics.len(), r.max_abs_z(), failed),
    )
}

fn conditional_law() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for r in [0.3, 0.5] {
        let rep = conditional_suite(Seed::from_u64(3), 100_000, 0.0, r, 1.0).map_err(|e| e.to_string())?;
        ok &= rep.passed();
        let failed: Vec<&str> = rep.failures().map(|s| s.name.as_str()).collect();
        detail.push(format!("r={r}: max |z| {:.2} failing {:?}", rep.max_abs_z(), failed));
    }
    check(ok, detail.join("; "))
}

fn quadrature() -> Outcome {
    let cfg = |l: i32| TreeConfig::new(0.0, 1.0, 2f64.powi(-l), 1, LevyMode::SpaceTimeTime, Seed::from_u64(4)).unwrap();
    let c = quadrature_comparison(&cfg(10), 2000).map_err(|e| e.to_string())?;
    let ratio = c.rms_h / (2f64.powi(-10) / 12f64.sqrt());
    let mut rms_k = Vec::new();
    for l in 7..=11 {
        rms_k.push(quadrature_comparison(&cfg(l), 2000).map_err(|e| e.to_string())?.rms_k.unwrap());
    }
    let monotone = rms_k.windows(2).all(|p| p[1] < p[0]);
    let rms_k: Vec<String> = rms_k.iter().map(|v| format!("{v:.3e}")).collect();
    check(
        (0.5..=2.0).contains(&ratio) && monotone,
        format!(
            "H̄ RMS / (2^-10/√12) = {ratio:.3}; K̄ RMS over ε = 2^-7..2^-11: {}",
            rms_k.join(", ")
        ),
    )
}

fn random_partition(rng: &mut ChaCha8Rng, cells: usize, min_gap: f64) -> Vec<f64> {
    loop {
        let mut p: Vec<f64> = (1..cells).map(|_| uniform(rng)).collect();
        p.push(0.0);
        p.push(1.0);
        p.sort_by(f64::total_cmp);
        if p.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            return p;
        }
    }
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn chen_telescoping() -> Outcome {
    let eps = 2f64.powi(-12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_chen, mut worst_ibm, mut worst_tibm): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..100 {
        let part = random_partition(&mut rng, 20, 2.0 * eps);
        let t = tree(eps, 2, LevyMode::SpaceTimeTime, 1000 + i);
        let cells: Vec<LevyTriple> = part.windows(2).map(|w| t.eval_interval(w[0], w[1]).unwrap()).collect();

        let mut acc = levy::unrescale(part[1], &cells[0]).unwrap();
        for (k, cell) in cells.iter().enumerate().skip(1) {
            let (s, m, u) = (0.0, part[k], part[k + 1]);
            let right = levy::unrescale(u - m, cell).unwrap();
            acc = chen_combine(s, m, u, &acc, &right, LevyMode::SpaceTimeTime).unwrap();
        }
        let whole = levy::unrescale(1.0, &t.eval_point(1.0).unwrap()).unwrap();
        worst_chen = worst_chen.max(relative_error(&acc.flatten(), &whole.flatten()));

        let one = t.eval_point(1.0).unwrap().restricted(LevyMode::SpaceTime);
        let (mut x, mut z) = (vec![0.0, 0.0], vec![0.0, 0.0, 0.0]);
        for (k, cell) in cells.iter().enumerate() {
            let (s, u) = (part[k], part[k + 1]);
            x = IntegratedBm.step(&x, s, u, &cell.clone().restricted(LevyMode::SpaceTime)).unwrap();
            z = TripleIntegratedBm.step(&z, s, u, cell).unwrap();
        }
        let x1 = IntegratedBm.step(&[0.0, 0.0], 0.0, 1.0, &one).unwrap();
        let z1 = TripleIntegratedBm.step(&[0.0, 0.0, 0.0], 0.0, 1.0, &t.eval_point(1.0).unwrap()).unwrap();
        worst_ibm = worst_ibm.max(relative_error(&x, &x1));
        worst_tibm = worst_tibm.max(relative_error(&z, &z1));
    }
    check(
        worst_chen < 1e-10 && worst_ibm < 1e-10 && worst_tibm < 1e-10,
        format!(
            "100 partitions: Chen fold {worst_chen:.1e}, integrated BM {worst_ibm:.1e}, triple-integrated {worst_tibm:.1e}"
        ),
    )
}

fn determinism() -> Outcome {
    let mut problems = Vec::new();
    for mode in [LevyMode::None, LevyMode::SpaceTime, LevyMode::SpaceTimeTime] {
        let cfg = TreeConfig::new(-0.5, 1.7, 1e-3, 3, mode, Seed::from_u64(6)).unwrap();
        let (a, b) = (VirtualBrownianTree::new(cfg.clone()), VirtualBrownianTree::new(cfg.clone()));
        let same = [0.1, 0.3337, 1.0, 1.7].iter().all(|&r| a.eval_point(r).unwrap() == b.eval_point(r).unwrap())
            && a.eval_interval(0.2, 0.9).unwrap() == b.eval_interval(0.2, 0.9).unwrap()
            && a.grid_values().unwrap() == b.grid_values().unwrap();
        if !same {
            problems.push(format!("{mode:?}: repeated evaluation differs"));
        }
        for (l1, l2) in [(3, 10), (8, 20)] {
            let r = refinement_invariance_suite(&cfg, l1, l2).map_err(|e| e.to_string())?;
            if !r.pass {
                problems.push(format!("{mode:?} L{l1}->L{l2}: {:.1e}", r.max_relative_difference));
            }
        }
    }
    // Seed-parallel estimates do not depend on the thread count.
    let sweep = Sweep { root_seed: Seed::from_u64(6), n_seeds: 24, steps: vec![4, 8, 16] };
    let gbm = GbmParams { mu: 0.05, sigma: 0.2, x0: 1.0, horizon: 1.0 };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| gbm_em_soc(&gbm, &sweep).unwrap())
    };
    if run(1) != run(3) {
        problems.push("SOC estimate depends on thread count".into());
    }
    check(problems.is_empty(), if problems.is_empty() { "bitwise identical; depth-invariant".into() } else { problems.join("; ") })
}

fn complexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let queries: Vec<f64> = (0..250).map(|_| uniform(&mut rng)).collect();
    let levels: Vec<i32> = (8..=20).collect();
    let trees: Vec<VirtualBrownianTree> =
        levels.iter().map(|&l| tree(2f64.powi(-l), 1, LevyMode::SpaceTimeTime, 7)).collect();
    // Depths are interleaved and each keeps its fastest batch, so a burst of
    // machine load cannot bend the fit.
    let mut best = vec![Duration::MAX; levels.len()];
    for _ in 0..80 {
        for (t, b) in trees.iter().zip(best.iter_mut()) {
            let start = Instant::now();
            for &r in &queries {
                std::hint::black_box(t.eval_point(std::hint::black_box(r)).unwrap());
            }
            *b = (*b).min(start.elapsed());
        }
    }
    let mut peaks = Vec::new();
    for t in &trees {
        let mut peak = 0;
        for &r in queries.iter().take(200) {
            let base = LIVE.load(Ordering::Relaxed);
            PEAK.store(base, Ordering::Relaxed);
            let y = t.eval_point(r).unwrap();
            peak = peak.max(PEAK.load(Ordering::Relaxed) - base);
            drop(y);
        }
        peaks.push(peak);
    }
    let depths: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
    let times: Vec<f64> = best.iter().map(|b| b.as_secs_f64() / queries.len() as f64 * 1e6).collect();
    let fit = fit_line(&depths, &times);
    let flat = peaks.iter().all(|&p| p == peaks[0]);
    check(
        fit.r_squared > 0.95 && fit.slope > 0.0 && flat,
        format!(
            "time ≈ {:.3} + {:.3}·L µs (R² {:.4}); peak heap per eval {} bytes at L=8, {} at L=20; µs by L: {}",
            fit.intercept,
            fit.slope,
            fit.r_squared,
            peaks[0],
            peaks[peaks.len() - 1],
            times.iter().map(|t| format!("{t:.2}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn same_leaf() -> Outcome {
    let t = TreeConfig::new(0.0, 1.0, 2f64.powi(-8), 1, LevyMode::SpaceTimeTime, Seed::from_u64(8)).unwrap();
    let (q, r) = (0.3001, 0.3005);
    let rep = same_leaf_linkage(&t, 2000, q, r).map_err(|e| e.to_string())?;
    // The same queries separated by a vertex are jointly Brownian.
    let spaced = TreeConfig::new(0.0, 1.0, 2f64.powi(-13), 1, LevyMode::SpaceTimeTime, Seed::from_u64(8)).unwrap();
    let joint = nondyadic_joint_suite(&spaced, 10_000, &[q, r]).map_err(|e| e.to_string())?;
    check(
        rep.fires && joint.passed(),
        format!(
            "leaf [{:.6}, {:.6}]: residual variance {:.1e} (< {:.1e}); Brownian would be {:.1e}; spaced queries pass joint suite: {}",
            rep.leaf.0,
            rep.leaf.1,
            rep.residual_variance,
            1e-6 * rep.leaf_width,
            rep.brownian_residual_variance,
            joint.passed()
        ),
    )
}

fn soc_sanity() -> Outcome {
    let steps = vec![16, 32, 64, 128, 256];
    let gbm = GbmParams { mu: 0.05, sigma: 0.2, x0: 1.0, horizon: 1.0 };
    let g = gbm_em_soc(&gbm, &Sweep { root_seed: Seed::from_u64(9), n_seeds: 200, steps }).map_err(|e| e.to_string())?;
    let ou = OuParams { theta: 1.0, sigma: 1.0, x0: 1.0, horizon: 1.0 };
    let o = ou_em_soc(&ou, &Sweep { root_seed: Seed::from_u64(9), n_seeds: 200, steps: vec![8, 16, 32, 64, 128] })
        .map_err(|e| e.to_string())?;
    let (gs, os) = (g.slope().unwrap_or(f64::NAN), o.slope().unwrap_or(f64::NAN));
    check((gs - 0.5).abs() <= 0.1 && (os - 1.0).abs() <= 0.15, format!("GBM+EM slope {gs:.3}, OU+EM slope {os:.3}"))
}

fn cir() -> Outcome {
    let mut slopes = Vec::new();
    for sigma in [1.5, 2.5] {
        let r = CirExperiment::standard(sigma).run().map_err(|e| e.to_string())?;
        let c = r.constant.slope().unwrap_or(f64::NAN);
        let a = r.adaptive.slope().unwrap_or(f64::NAN);
        slopes.push((sigma, c, a));
    }
    let (_, c15, a15) = slopes[0];
    let (_, c25, a25) = slopes[1];
    check(
        a15 > c15 && a25 / c25 >= 1.5,
        format!(
            "σ=1.5: constant {c15:.3}, adaptive {a15:.3}; σ=2.5: constant {c25:.3}, adaptive {a25:.3}, ratio {:.2}",
            a25 / c25
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("closed-form midpoint covariance", closed_form),
        ("unconditional moments", unconditional_moments),
        ("conditional law", conditional_law),
        ("pathwise quadrature oracle", quadrature),
        ("Chen telescoping", chen_telescoping),
        ("determinism and refinement", determinism),
        ("complexity", complexity),
        ("same-leaf linkage", same_leaf),
        ("SOC harness sanity", soc_sanity),
        ("CIR adaptive vs constant", cir),
    ];
    let selected: Option<Vec<usize>> = std::env::var("VBT_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if selected.as_ref().is_some_and(|s| !s.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2} PASS  {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1} s): {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
