use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;
use repmut_bench::{linear_bm, standard_normal_grid, uniform_measure};
use repmut_core::closed_form::linear_engine;
use repmut_core::metric::bl_distance;
use repmut_core::numerics::kde::{kde, KdeOptions};
use repmut_core::particle::run_particles;
use repmut_core::pde::{solve_rm_pde, PdeScheme};
use repmut_core::sde::TimeGrid;
use repmut_core::spectral::kummer_m;
use std::hint::black_box;

fn particles(c: &mut Criterion) {
    let (m, g, u0) = linear_bm();
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let mut group = c.benchmark_group("particles");
    group.sample_size(10);
    for n in [1_000, 10_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| run_particles(&m, &g, &u0, n, &grid, 1).unwrap())
        });
    }
    group.finish();
}

fn bl(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(3);
    let mut group = c.benchmark_group("bl_distance");
    for k in [32, 256, 1024] {
        let mu = uniform_measure((0..k).map(|_| rng.random_range(-4.0..4.0)).collect(), 0.8);
        let nu = uniform_measure((0..k).map(|_| rng.random_range(-4.0..4.0)).collect(), 0.6);
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| bl_distance(black_box(&mu), black_box(&nu)).unwrap())
        });
    }
    group.finish();
}

fn density(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(4);
    let pts: Vec<f64> = (0..100_000).map(|_| rng.random_range(-3.0..3.0)).collect();
    c.bench_function("kde_1e5", |b| b.iter(|| kde(black_box(&pts), None, &KdeOptions::default()).unwrap()));
    let (m, g, u0) = linear_bm();
    c.bench_function("linear_engine_grid", |b| {
        let nodes: Vec<f64> = (0..1001).map(|i| -8.0 + 0.02 * i as f64).collect();
        b.iter(|| linear_engine(&m, &g, &u0).unwrap().density_grid(1.0, &nodes).unwrap())
    });
}

fn pde(c: &mut Criterion) {
    let (m, g, _) = linear_bm();
    let u0 = standard_normal_grid(12.0, 2001);
    let mut group = c.benchmark_group("pde_100_steps");
    group.sample_size(20);
    for cells in [512, 2048] {
        let scheme = PdeScheme::full_line(12.0, cells, 1e-3);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &cells, |b, _| {
            b.iter(|| solve_rm_pde(&m, &g, &u0, &[0.1], &scheme).unwrap())
        });
    }
    group.finish();
}

fn kummer(c: &mut Criterion) {
    c.bench_function("kummer_m", |b| b.iter(|| kummer_m(black_box(0.7), black_box(2.0), black_box(35.0)).unwrap()));
}

criterion_group!(benches, particles, bl, density, pde, kummer);
criterion_main!(benches);
