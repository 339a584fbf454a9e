use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vbt_core::solvers::experiments::GbmParams;
use vbt_core::solvers::{adaptive_solve, CirDie, CirParams, Control, ControllerState, EulerMaruyama, SolveOptions};
use vbt_core::{LevyMode, Seed, TreeConfig, VirtualBrownianTree};

fn tree() -> VirtualBrownianTree {
    VirtualBrownianTree::new(TreeConfig::new(0.0, 1.0, 2f64.powi(-18), 1, LevyMode::None, Seed::from_u64(3)).unwrap())
}

fn gbm(c: &mut Criterion) {
    let problem = GbmParams { mu: 0.05, sigma: 0.2, x0: 1.0, horizon: 1.0 }.problem().unwrap();
    let t = tree();
    let opts = SolveOptions::default();
    let em = EulerMaruyama::new(&problem);
    let mut g = c.benchmark_group("gbm_em");
    g.bench_function("constant/256", |b| {
        b.iter(|| black_box(adaptive_solve(&problem, &em, &Control::Constant { steps: 256 }, &t, &opts).unwrap()))
    });
    let pi = Control::Pi(ControllerState::new(0.01, 2f64.powi(-14), 0.25, 1e-3).unwrap());
    g.bench_function("pi/1e-3", |b| b.iter(|| black_box(adaptive_solve(&problem, &em, &pi, &t, &opts).unwrap())));
    g.finish();
}

fn cir(c: &mut Criterion) {
    let params = CirParams { a: 1.0, b: 1.0, sigma: 1.5, x0: 1.0, horizon: 1.0 };
    let die = CirDie::new(params).unwrap();
    let problem = params.problem().unwrap();
    let t = tree();
    let opts = SolveOptions::default();
    let mut g = c.benchmark_group("cir_die");
    g.bench_function("constant/128", |b| {
        b.iter(|| black_box(adaptive_solve(&problem, &die, &Control::Constant { steps: 128 }, &t, &opts).unwrap()))
    });
    let state = ControllerState { cir_constant: 1.0, ..ControllerState::new(0.25, 2f64.powi(-13), 0.25, 0.02).unwrap() };
    g.bench_function("adaptive/0.02", |b| b.iter(|| black_box(adaptive_solve(&problem, &die, &Control::Cir(state.clone()), &t, &opts).unwrap())));
    g.finish();
}

criterion_group!(benches, gbm, cir);
criterion_main!(benches);
