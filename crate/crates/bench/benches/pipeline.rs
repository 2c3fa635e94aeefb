use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dcgrid_core::model::presets::{operating_point_1, operating_point_2};
use dcgrid_core::sweep::{
    linspace, rmax_map, Criterion as StabilityCriterion, SweepGrid, SweepOptions,
};
use dcgrid_core::{analytic_jacobian, assess, eval_rhs, simulate, solve_equilibrium, SimControls};

fn model(c: &mut Criterion) {
    let p = operating_point_2(9e-3, 0.1e-3, 1.0);
    let eq = solve_equilibrium(&p).unwrap();
    c.bench_function("eval_rhs", |b| {
        b.iter(|| eval_rhs(black_box(&p), black_box(&eq.state)))
    });
    c.bench_function("solve_equilibrium", |b| {
        b.iter(|| solve_equilibrium(black_box(&p)))
    });
    c.bench_function("analytic_jacobian", |b| {
        b.iter(|| analytic_jacobian(black_box(&p), black_box(&eq)))
    });
    c.bench_function("assess", |b| b.iter(|| assess(black_box(&p))));
}

fn simulation(c: &mut Criterion) {
    let p = operating_point_2(9e-3, 0.1e-3, 1.0);
    let eq = solve_equilibrium(&p).unwrap();
    let mut x0 = eq.state.clone();
    let iv = x0.layout().v();
    x0.as_mut_slice()[iv] *= 1.01;
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("op2_0.5s", |b| {
        b.iter(|| simulate(black_box(&p), black_box(&x0), 0.5, &SimControls::default()))
    });
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let ops = vec![
        ("op1".to_string(), operating_point_1(1e-3, 1e-3, 1.0)),
        ("op2".to_string(), operating_point_2(1e-3, 1e-3, 1.0)),
    ];
    let grid = SweepGrid {
        c_values: linspace(0.1e-3, 10e-3, 12),
        l_values: vec![0.1e-3, 0.25e-3, 0.5e-3, 1e-3, 2e-3, 5e-3],
        d_values: vec![0.25, 0.5, 1.0],
        criterion: StabilityCriterion::Ssasc,
    };
    let mut group = c.benchmark_group("sweep");
    group.sample_size(20);
    group.bench_function("rmax_map_432", |b| {
        b.iter(|| rmax_map(black_box(&ops), black_box(&grid), &SweepOptions::default()))
    });
    group.finish();
}

criterion_group!(benches, model, simulation, sweep);
criterion_main!(benches);
