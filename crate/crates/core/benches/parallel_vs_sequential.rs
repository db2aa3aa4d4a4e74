use std::hint::black_box;

use alrh::lattice::LatticeField;
use alrh::rh::RhSolver;
use alrh::scattering::reflection_grid_with;
use alrh::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn field() -> LatticeField {
    LatticeField::gaussian(0.3, 20.0, 400).unwrap()
}

fn scattering(c: &mut Criterion) {
    let f = field();
    let mut group = c.benchmark_group("reflection_grid");
    for n in [256usize, 1024] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| reflection_grid_with(black_box(&f), n, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn reconstruction(c: &mut Criterion) {
    let grid = reflection_grid_with(&field(), 512, Execution::Parallel).unwrap();
    let solver = RhSolver::new(grid).unwrap();
    let ns: Vec<i64> = (-8..=8).collect();
    let mut group = c.benchmark_group("reconstruct_many");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| solver.reconstruct_many(black_box(&ns), 2.0, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, scattering, reconstruction);
criterion_main!(benches);
