//! Parallel-vs-serial throughput of the batch-style kernels.
//!
//! This target requires the `parallel` feature; the "serial" series pins the
//! rayon pool to one thread, which exercises the same code path as the
//! sequential fallback plus scheduling overhead. To benchmark the true
//! fallback build, run `cargo bench --no-default-features` and let criterion
//! compare against the saved baseline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ctqw::evolve::{
    integrate_master, sample_model, sample_times, DensityMatrix, IntegrateOptions,
    PerturbativeModel,
};
use ctqw::network::NetworkSpec;
use ctqw::spectral::{classify_degeneracies, liouvillian_dense_with_limit, DEGENERACY_TOL};

fn single_thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool")
}

fn bench_degeneracy_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("degeneracy_scan");
    group.sample_size(20);
    for &n in &[32usize, 64, 96] {
        let spec = NetworkSpec::unit(n, 3).unwrap();
        group.bench_with_input(BenchmarkId::new("parallel", n), &spec, |b, s| {
            b.iter(|| classify_degeneracies(black_box(s), DEGENERACY_TOL))
        });
        let pool = single_thread_pool();
        group.bench_with_input(BenchmarkId::new("serial", n), &spec, |b, s| {
            b.iter(|| pool.install(|| classify_degeneracies(black_box(s), DEGENERACY_TOL)))
        });
    }
    group.finish();
}

fn bench_perturbative_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("perturbative_batch");
    group.sample_size(20);
    for &n in &[32usize, 64] {
        let spec = NetworkSpec::unit(n, 2).unwrap();
        let model = PerturbativeModel::new(&spec, 0.001, 0).unwrap();
        let times = sample_times(500.0, 0.5).unwrap();
        group.bench_with_input(BenchmarkId::new("parallel", n), &times, |b, ts| {
            b.iter(|| sample_model(black_box(&model), ts).unwrap())
        });
        let pool = single_thread_pool();
        group.bench_with_input(BenchmarkId::new("serial", n), &times, |b, ts| {
            b.iter(|| pool.install(|| sample_model(black_box(&model), ts).unwrap()))
        });
    }
    group.finish();
}

fn bench_master_integration(c: &mut Criterion) {
    let mut group = c.benchmark_group("master_integration");
    group.sample_size(10);
    for &n in &[64usize, 96] {
        let spec = NetworkSpec::new(n, 2, 0.25).unwrap();
        let rho0 = DensityMatrix::pure_node(n, 0).unwrap();
        let opts = IntegrateOptions::with_stride(5.0);
        group.bench_with_input(BenchmarkId::new("parallel", n), &spec, |b, s| {
            b.iter(|| integrate_master(black_box(s), 0.01, &rho0, 20.0, &opts).unwrap())
        });
        let pool = single_thread_pool();
        group.bench_with_input(BenchmarkId::new("serial", n), &spec, |b, s| {
            b.iter(|| {
                pool.install(|| integrate_master(black_box(s), 0.01, &rho0, 20.0, &opts).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_dense_generator(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense_generator");
    group.sample_size(10);
    for &n in &[16usize, 24] {
        let spec = NetworkSpec::new(n, 3, 0.25).unwrap();
        group.bench_with_input(BenchmarkId::new("build", n), &spec, |b, s| {
            b.iter(|| liouvillian_dense_with_limit(black_box(s), 0.01, 64).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_degeneracy_scan,
    bench_perturbative_batch,
    bench_master_integration,
    bench_dense_generator
);
criterion_main!(benches);
