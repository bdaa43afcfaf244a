use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gonodyn_core::bifurcation::uniform_grid;
use gonodyn_core::integrate::{integrate_adaptive, integrate_fixed};
use gonodyn_core::{eigenvalues, psi_critical, sweep_branches, Controls, IntegrationSettings, Method, Model, ModelParams, State};

fn rhs(c: &mut Criterion) {
    let model = Model::new(ModelParams::reference(), Controls::reference()).unwrap();
    let x = State::reference().to_array();
    c.bench_function("rhs", |b| b.iter(|| model.derivative(black_box(&x))));
    c.bench_function("jacobian_eigenvalues", |b| {
        let j = model.jacobian(&x);
        b.iter(|| eigenvalues(black_box(&j)))
    });
}

fn integrators(c: &mut Criterion) {
    let p = ModelParams::reference();
    let k = Controls::reference();
    let y0 = State::reference();
    let mut group = c.benchmark_group("integrate_10y");
    let fixed = IntegrationSettings { method: Method::Rk4, dt: 1e-3, t_end: 10.0, sample_dt: 0.1, ..Default::default() };
    group.bench_function("rk4_dt1e-3", |b| b.iter(|| integrate_fixed(&p, &k, black_box(&y0), &fixed).unwrap()));
    for rtol in [1e-6, 1e-9] {
        let s = IntegrationSettings { rtol, t_end: 10.0, sample_dt: 0.1, ..Default::default() };
        group.bench_with_input(BenchmarkId::new("adaptive", rtol), &s, |b, s| {
            b.iter(|| integrate_adaptive(&p, &k, black_box(&y0), s).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let p = ModelParams::reference();
    let k = Controls::reference();
    let grid = uniform_grid(2.0 * psi_critical(&p, &k).unwrap(), 200);
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("200_points", |b| b.iter(|| sweep_branches(&p, &k, black_box(&grid)).unwrap()));
    group.finish();
}

criterion_group!(benches, rhs, integrators, sweep);
criterion_main!(benches);
