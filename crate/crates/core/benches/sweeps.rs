use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pencilbench::analysis::sweep;
use pencilbench::methods::{stability_region_sample, RegionGrid};
use pencilbench::models::LinearizedModel;
use pencilbench::validate::random_diagonalizable;
use pencilbench::{Execution, MethodSpec};

fn model(dim: usize) -> LinearizedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (a, _) = random_diagonalizable(&mut rng, dim);
    LinearizedModel::ode(a).unwrap()
}

fn h_sweep(c: &mut Criterion) {
    let lm = model(40);
    let hs: Vec<f64> = (0..32).map(|k| 1e-3 * 1.2f64.powi(k)).collect();
    let mut g = c.benchmark_group("h_sweep_r40");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| sweep(black_box(&MethodSpec::CATALOG), &lm, &hs, exec).unwrap())
        });
    }
    g.finish();
}

fn region(c: &mut Criterion) {
    let grid = RegionGrid {
        re: (-4.0, 2.0),
        im: (-4.0, 4.0),
        n_re: 200,
        n_im: 200,
    };
    let mut g = c.benchmark_group("region_rk4_200x200");
    for exec in [Execution::Sequential, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| stability_region_sample(black_box(&MethodSpec::Rk4), &grid, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, h_sweep, region);
criterion_main!(benches);
