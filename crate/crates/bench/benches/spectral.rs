// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use cgolab::cgo::solve_psi;
use cgolab::{Direction, Regularization, SolverConfig, SymbolTable};
use cgolab_bench::fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const SIZES: [usize; 2] = [32, 64];

fn transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("transform");
    for n in SIZES {
        let fx = fixture(n, 16.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &fx.field, |b, f| {
            b.iter(|| black_box(f.transform(Direction::Forward).unwrap()))
        });
    }
    group.finish();
}

fn xdot_norm(c: &mut Criterion) {
    let mut group = c.benchmark_group("xdot_norm");
    for n in SIZES {
        let fx = fixture(n, 16.0);
        let table = SymbolTable::new(&fx.zeta, &fx.grid, Regularization::default());
        let f = fx.field.to_spectral();
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| black_box(table.xdot_norm(f, 0.5).unwrap()))
        });
    }
    group.finish();
}

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_psi");
    group.sample_size(10);
    let cfg = SolverConfig::default();
    for n in SIZES {
        let fx = fixture(n, 16.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &fx, |b, fx| {
            b.iter(|| black_box(solve_psi(&fx.cond, &fx.zeta, &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, transform, xdot_norm, solve);
criterion_main!(benches);
