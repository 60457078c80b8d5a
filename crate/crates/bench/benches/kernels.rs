use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ionize_core::dynamics::WavefunctionEvaluator;
use ionize_core::spectral::build_and_solve;
use ionize_core::volterra::precompute_cross_kernel;
use ionize_core::{ModelParams, TimeGrid, C64};
use ionize_suite::reference_march;

fn cross_kernel(c: &mut Criterion) {
    let params = ModelParams::default_generic();
    let grid = TimeGrid::new(10.0, 1000).unwrap();
    c.bench_function("cross_kernel_table_1000", |b| b.iter(|| precompute_cross_kernel(black_box(&params), grid)));
}

fn march(c: &mut Criterion) {
    let mut g = c.benchmark_group("march");
    g.sample_size(10);
    g.bench_function("t10_h0.01", |b| b.iter(|| reference_march(black_box(10.0), 1000)));
    g.finish();
}

fn lattice(c: &mut Criterion) {
    let params = ModelParams::default_generic();
    let mut g = c.benchmark_group("build_and_solve");
    g.sample_size(20);
    for n in [16usize, 64] {
        g.bench_function(format!("N{n}"), |b| {
            b.iter(|| build_and_solve(black_box(C64::new(1.5, 0.4)), n, &params).unwrap())
        });
    }
    g.finish();
}

fn wavefunction(c: &mut Criterion) {
    let traj = reference_march(5.0, 500);
    let ev = WavefunctionEvaluator::new(&traj, 5.0).unwrap();
    c.bench_function("wavefunction_eval", |b| b.iter(|| ev.eval(black_box([0.3, -0.2, 0.9])).unwrap()));
}

criterion_group!(benches, cross_kernel, march, lattice, wavefunction);
criterion_main!(benches);
