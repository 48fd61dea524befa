//! Benchmarks for the data-parallel hot paths.
//!
//! Run once per threading mode and compare the reports:
//!
//! ```text
//! cargo bench --bench ops                          # rayon work-stealing
//! cargo bench --bench ops --no-default-features    # sequential fallback
//! ```
//!
//! Every benchmark id carries a `parallel/` or `sequential/` prefix, so
//! criterion keeps the two modes side by side instead of overwriting one
//! baseline with the other.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use jumpput::fundsol::gbm_pair;
use jumpput::gridfn::{apply_S, Grid, GridFunction};
use jumpput::mc::estimate_value;
use jumpput::model::{JumpMeasure, MarketModel, VolatilityModel};
use jumpput::operator::OperatorContext;

const K: f64 = 1.0;

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn lognormal_model() -> MarketModel {
    let nu = JumpMeasure::lognormal(-0.08, 0.4, 32).unwrap();
    MarketModel::new(VolatilityModel::constant(0.2).unwrap(), 0.05, 0.05, 0.1, nu, K).unwrap()
}

fn bench_jump_convolution(c: &mut Criterion) {
    let grid = Grid::new(1e-3, 1e2, 2000, K).unwrap();
    let f = GridFunction::payoff(grid, K);
    let nu = JumpMeasure::lognormal(-0.08, 0.4, 32).unwrap();
    c.bench_function(&format!("{}/apply_S_n2000_q32", mode()), |b| {
        b.iter(|| apply_S(black_box(&f), black_box(&nu)))
    });
}

fn bench_operator_sweep(c: &mut Criterion) {
    let model = lognormal_model();
    let grid = Grid::new(1e-3, 1e2, 2000, K).unwrap();
    let pair = gbm_pair(0.2, model.mu(), model.rho()).unwrap();
    let ctx = OperatorContext::new(model, pair, grid.clone()).unwrap();
    let h = GridFunction::payoff(grid, K);
    let l = ctx.find_boundary(&h).unwrap();
    c.bench_function(&format!("{}/apply_R_l_n2000", mode()), |b| {
        b.iter(|| ctx.apply_R_l(black_box(&h), black_box(l)).unwrap())
    });
}

fn bench_mc_batch(c: &mut Criterion) {
    let model = lognormal_model();
    let mut group = c.benchmark_group("mc");
    group.sample_size(20);
    group.bench_function(format!("{}/paths1000_dt1e-2", mode()), |b| {
        b.iter(|| {
            estimate_value(black_box(&model), K, 0.7, 1000, 42, 1e-2, 5.0).unwrap()
        })
    });
    group.finish();
}

fn bench_full_iteration(c: &mut Criterion) {
    let model = lognormal_model();
    let grid = Grid::new(1e-3, 1e2, 2000, K).unwrap();
    let pair = gbm_pair(0.2, model.mu(), model.rho()).unwrap();
    let ctx = OperatorContext::new(model, pair, grid.clone()).unwrap();
    let h = GridFunction::payoff(grid, K);
    c.bench_function(&format!("{}/fixed_point_step_n2000", mode()), |b| {
        b.iter(|| {
            let l = ctx.find_boundary(black_box(&h)).unwrap();
            ctx.apply_R_l(black_box(&h), l).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_jump_convolution,
    bench_operator_sweep,
    bench_mc_batch,
    bench_full_iteration
);
criterion_main!(benches);
