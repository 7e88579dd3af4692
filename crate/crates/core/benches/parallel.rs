use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fpm_core::exec;
use fpm_core::lattice::{fractional_laplacian, make_grid, ScalarField};
use fpm_core::stepper::{coupled_step, density_step, SchemeParams, StepState};

fn bump(n: usize) -> ScalarField {
    let g = make_grid(n, 20.0).unwrap();
    ScalarField::from_fn(&g, |x, y| (-(x * x + y * y) / 8.0).exp())
}

fn paths() -> [(&'static str, bool); 2] {
    [("sequential", false), ("parallel", true)]
}

fn reductions(c: &mut Criterion) {
    let mut group = c.benchmark_group("reduction");
    for n in [128, 512] {
        let f = bump(n);
        for (name, on) in paths() {
            exec::set_parallel(on);
            group.bench_with_input(BenchmarkId::new(name, n), &f, |b, f| b.iter(|| black_box(f.l2_norm())));
        }
    }
    group.finish();
}

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("fractional_laplacian");
    for n in [128, 256] {
        let f = bump(n);
        for (name, on) in paths() {
            exec::set_parallel(on);
            group.bench_with_input(BenchmarkId::new(name, n), &f, |b, f| {
                b.iter(|| fractional_laplacian(black_box(f), 0.75).unwrap())
            });
        }
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    group.sample_size(10);
    let u = bump(128);
    let p = u.scale(0.5);
    let params = SchemeParams::default();
    let state = StepState::new(u.clone(), p.clone(), 0.0);
    for (name, on) in paths() {
        exec::set_parallel(on);
        group.bench_function(BenchmarkId::new("density", name), |b| {
            b.iter(|| density_step(&u, &p, &u, &params, None).unwrap())
        });
        group.bench_function(BenchmarkId::new("coupled", name), |b| {
            b.iter(|| coupled_step(&state, &params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, reductions, operators, steps);
criterion_main!(benches);
