use std::fmt::Write as _;
use std::io::Write as _;

use anyhow::{bail, Context, Result};
use vbt_core::bridges::Fault;
use vbt_core::solvers::experiments::{gbm_em_soc, integrated_bm_soc, ou_em_soc, CirExperiment, GbmParams, OuParams, Sweep};
use vbt_core::solvers::{CirParams, SocEstimate};
use vbt_core::validation::{
    conditional_suite_with_fault, midpoint_closed_form, moment_suite, nondyadic_joint_suite,
    refinement_invariance_suite, same_leaf_linkage, vertex_between, MomentReport, Statistic, MIN_SEEDS,
};
use vbt_core::{LevyTriple, Seed, TreeConfig, VirtualBrownianTree};

use crate::config::header;
use crate::{CirArgs, Command, Common, FaultArg, Failure, Model, PathArgs, SampleArgs, SocArgs, ValidateArgs};

pub fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Sample(a) => Ok(sample(a)?),
        Command::Validate(a) => validate(a),
        Command::Cir(a) => Ok(cir(a)?),
        Command::Soc(a) => Ok(soc(a)?),
    }
}

fn parse_seed(s: &str) -> Result<Seed> {
    let s = s.trim();
    let v = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .with_context(|| format!("invalid seed `{s}`"))?;
    Ok(Seed::from_u64(v))
}

/// Seed, thread pool; returns the root seed.
fn setup(common: &Common) -> Result<Seed> {
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("building the thread pool")?;
    }
    parse_seed(&common.seed)
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("writing stdout")
        }
    }
}

fn tree_config(path: &PathArgs, seed: Seed) -> Result<TreeConfig> {
    Ok(TreeConfig::new(path.t0, path.t1, path.eps, path.dim, path.mode.into(), seed)?)
}

fn sample(args: SampleArgs) -> Result<()> {
    let seed = setup(&args.common)?;
    let cfg = tree_config(&args.path, seed)?;
    let tree = VirtualBrownianTree::new(cfg);
    let (times, values): (Vec<f64>, Vec<LevyTriple>) = if args.grid {
        if !args.times.is_empty() {
            bail!("--grid and --times are mutually exclusive");
        }
        if tree.depth() > 20 {
            bail!("--grid would emit 2^{} + 1 rows; raise --eps", tree.depth());
        }
        (tree.dyadic_grid(), tree.grid_values()?)
    } else {
        if args.times.is_empty() {
            bail!("give --times or --grid");
        }
        let values = args.times.iter().map(|&t| tree.eval_point(t)).collect::<vbt_core::Result<Vec<_>>>()?;
        (args.times.clone(), values)
    };

    let mut text = header("sample", &args)?;
    let dim = args.path.dim;
    let mode: vbt_core::LevyMode = args.path.mode.into();
    let mut cols = vec!["time".to_string()];
    cols.extend((0..dim).map(|i| format!("w{i}")));
    if mode.has_h() {
        cols.extend((0..dim).map(|i| format!("h{i}")));
    }
    if mode.has_k() {
        cols.extend((0..dim).map(|i| format!("k{i}")));
    }
    writeln!(text, "{}", cols.join(","))?;
    for (t, y) in times.iter().zip(&values) {
        write!(text, "{t:.16e}")?;
        for x in y.w.iter().chain(y.h.iter().flatten()).chain(y.k.iter().flatten()) {
            write!(text, ",{x:.16e}")?;
        }
        text.push('\n');
    }
    emit(&args.common, &text)
}

fn validate(args: ValidateArgs) -> std::result::Result<(), Failure> {
    let seed = setup(&args.common)?;
    if args.n_seeds < MIN_SEEDS {
        return Err(anyhow::anyhow!("--n-seeds must be at least {MIN_SEEDS}, got {}", args.n_seeds).into());
    }
    let fault = match args.inject_fault {
        FaultArg::None => Fault::None,
        FaultArg::FlipHkMean => Fault::FlipHkMean,
    };
    let cfg = tree_config(&args.path, seed).map_err(Failure::from)?.with_fault(fault);
    let (t0, len) = (cfg.t0(), cfg.t1() - cfg.t0());
    let at = |f: f64| if f == 1.0 { cfg.t1() } else { t0 + len * f };
    let n = args.n_seeds;
    let core = |r: vbt_core::Result<MomentReport>| r.map_err(|e| Failure::from(anyhow::Error::from(e)));

    // Each suite draws from its own child of the root seed.
    let mut reports = vec![core(midpoint_closed_form())?];
    reports.push(core(moment_suite(&cfg.with_seed(seed.child(0)), n, &[at(0.25), at(0.61), at(1.0)]))?);
    for (i, r) in [0.3, 0.5].into_iter().enumerate() {
        let mut rep = core(conditional_suite_with_fault(seed.child(1 + i as u64), n, t0, at(r), cfg.t1(), fault))?;
        rep.suite = format!("conditional r={r}");
        reports.push(rep);
    }
    let queries = [at(0.3), at(0.55), at(0.8), at(1.0)];
    if queries.windows(2).all(|w| vertex_between(&cfg, w[0], w[1])) {
        reports.push(core(nondyadic_joint_suite(&cfg.with_seed(seed.child(3)), n, &queries))?);
    } else {
        log::warn!("tree too coarse to separate the joint-law queries; skipping that suite");
    }

    // Two queries inside the leaf holding t0 + 0.3·len must be linked.
    let w = cfg.leaf_width();
    let v = t0 + ((at(0.3) - t0) / w).floor() * w;
    let link = same_leaf_linkage(&cfg.with_seed(seed.child(4)), n.min(2000), v + 0.25 * w, v + 0.75 * w)
        .map_err(|e| Failure::from(anyhow::Error::from(e)))?;
    let mut linkage = MomentReport::new("same-leaf linkage", n.min(2000));
    linkage.push(Statistic {
        name: "residual variance".into(),
        empirical: link.residual_variance,
        target: 1e-6 * link.leaf_width,
        std_error: 0.0,
        z: f64::NAN,
        pass: link.fires,
    });
    reports.push(linkage);

    let l1 = cfg.depth().min(10);
    let refine = refinement_invariance_suite(&cfg.with_seed(seed.child(5)), l1, l1 + 10)
        .map_err(|e| Failure::from(anyhow::Error::from(e)))?;
    let mut refinement = MomentReport::new("refinement", refine.vertices);
    refinement.push(Statistic {
        name: format!("L{}->L{} max relative difference", refine.coarse_depth, refine.fine_depth),
        empirical: refine.max_relative_difference,
        target: 0.0,
        std_error: 0.0,
        z: f64::NAN,
        pass: refine.pass,
    });
    reports.push(refinement);

    let mut text = header("validate", &args)?;
    text.push_str(MomentReport::CSV_HEADER);
    text.push('\n');
    for r in &reports {
        text.push_str(&r.csv_rows());
    }
    emit(&args.common, &text)?;

    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failures().map(move |s| format!("  {}: {} (empirical {:.6e}, target {:.6e}, z {:.2})", r.suite, s.name, s.empirical, s.target, s.z)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("validation failed:\n{}", failed.join("\n"))))
    }
}

fn soc_rows(text: &mut String, solver: &str, stepping: &str, est: &SocEstimate) -> Result<()> {
    for p in &est.points {
        writeln!(
            text,
            "{solver},{stepping},{},{:.16e},{:.16e},{:.16e},{},{}",
            p.label, p.mean_step, p.strong_error, p.terminal_error, p.seeds, p.dropped
        )?;
    }
    Ok(())
}

fn fit_line(text: &mut String, stepping: &str, est: &SocEstimate) -> Result<()> {
    match est.fit {
        Some(f) => writeln!(text, "# fit {stepping}: slope={:.6} r2={:.6}", f.slope, f.r_squared)?,
        None => writeln!(text, "# fit {stepping}: exact=true")?,
    }
    Ok(())
}

const SOC_HEADER: &str = "solver,stepping,label,mean_h,strong_error,terminal_error,seeds,dropped";

fn cir(args: CirArgs) -> Result<()> {
    let seed = setup(&args.common)?;
    let params = CirParams { a: args.a, b: args.b, sigma: args.sigma, x0: args.x0, horizon: args.horizon };
    params.validate()?;
    if params.shifted_mean() < 0.0 && !args.allow_truncation {
        bail!(
            "b - sigma^2/(4a) = {} < 0: the drift-implicit scheme is undefined; pass --allow-truncation to truncate at zero",
            params.shifted_mean()
        );
    }
    let exp = CirExperiment {
        params,
        sweep: Sweep { root_seed: seed, n_seeds: args.n_seeds, steps: args.steps.clone() },
        tolerances: args.tolerances.clone(),
        h_min: args.h_min,
        h_max: args.h_max,
        cir_constant: args.cir_constant,
    };
    let res = exp.run()?;
    let mut text = header("cir", &args)?;
    writeln!(text, "# reference_step={:e} truncated={}", res.reference_step, res.truncated)?;
    writeln!(text, "{SOC_HEADER}")?;
    soc_rows(&mut text, "die", "constant", &res.constant)?;
    soc_rows(&mut text, "die", "adaptive", &res.adaptive)?;
    fit_line(&mut text, "constant", &res.constant)?;
    fit_line(&mut text, "adaptive", &res.adaptive)?;
    emit(&args.common, &text)
}

fn soc(mut args: SocArgs) -> Result<()> {
    let seed = setup(&args.common)?;
    let steps = args.steps.get_or_insert_with(|| match args.model {
        Model::Gbm => vec![16, 32, 64, 128, 256],
        Model::Ou | Model::Ibm => vec![8, 16, 32, 64, 128],
    });
    let sweep = Sweep { root_seed: seed, n_seeds: args.n_seeds, steps: steps.clone() };
    let (solver, est) = match args.model {
        Model::Gbm => {
            let sigma = *args.sigma.get_or_insert(0.2);
            let p = GbmParams { mu: args.mu, sigma, x0: args.x0, horizon: args.horizon };
            ("em", gbm_em_soc(&p, &sweep)?)
        }
        Model::Ou => {
            let sigma = *args.sigma.get_or_insert(1.0);
            let p = OuParams { theta: args.theta, sigma, x0: args.x0, horizon: args.horizon };
            ("em", ou_em_soc(&p, &sweep)?)
        }
        Model::Ibm => ("exact", integrated_bm_soc(args.horizon, &sweep)?),
    };
    let mut text = header("soc", &args)?;
    writeln!(text, "{SOC_HEADER}")?;
    soc_rows(&mut text, solver, "constant", &est)?;
    fit_line(&mut text, "constant", &est)?;
    emit(&args.common, &text)
}
