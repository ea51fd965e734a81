use criterion::{criterion_group, criterion_main, Criterion};
use pacdp_bench::{logistic_config, logistic_federation, noisy_support, small_grid};
use pacdp_core::federation::{local_update, run_training};
use pacdp_core::fitting::{fit_quadratic, simulate_grid};
use pacdp_core::numerics::init_model;
use std::hint::black_box;

fn local(c: &mut Criterion) {
    let config = logistic_config(10, 5);
    let (clients, _) = logistic_federation(10, &config);
    let w = init_model(&config.model, 1).unwrap();
    c.bench_function("local_update/logistic", |b| {
        b.iter(|| local_update(black_box(&clients[0]), &w, &config.policy, 0, &config).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let config = logistic_config(30, 10);
    let (clients, eval) = logistic_federation(20, &config);
    let mut group = c.benchmark_group("engine");
    group.sample_size(20);
    group.bench_function("run_training/N20 K10 T30", |b| {
        b.iter(|| {
            let mut clients = clients.clone();
            run_training(&config, &mut clients, &eval).unwrap()
        })
    });
    let (proxy, grid) = small_grid();
    group.bench_function("simulate_grid/3x3", |b| {
        b.iter(|| simulate_grid(&proxy, &grid).unwrap())
    });
    group.finish();
}

fn fitting(c: &mut Criterion) {
    let points = noisy_support(80);
    c.bench_function("fit_quadratic/80", |b| {
        b.iter(|| fit_quadratic(black_box(&points)).unwrap())
    });
}

criterion_group!(benches, local, training, fitting);
criterion_main!(benches);
