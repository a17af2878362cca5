use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nlch_core::operators::{grad_i, OperatorL, PhiSpec};
use nlch_core::{Grid, InnerSettings, KernelMatrix, KernelSpec, MassMode, Mode, Potential, Scheme, SchemeConfig};

fn grid(n: usize) -> Grid {
    Grid::build(1, &[[0.0, 1.0]], n, 0.5, 2).unwrap()
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    for n in [32, 64, 128] {
        let g = grid(n);
        group.bench_with_input(BenchmarkId::new("power_global", n), &g, |b, g| {
            b.iter(|| KernelMatrix::assemble(&KernelSpec::power_global(0.5, 2.0), black_box(g), Mode::Dirichlet).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spectral_k4", n), &g, |b, g| {
            b.iter(|| KernelMatrix::assemble(&KernelSpec::spectral_k4(0.5), black_box(g), Mode::Regional).unwrap())
        });
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("grad_i");
    for n in [32, 64, 128] {
        let g = grid(n);
        let km = KernelMatrix::assemble(&KernelSpec::power_global(0.5, 4.0), &g, Mode::Dirichlet).unwrap();
        let u = g.sample(|x| (2.0 * PI * x[0]).sin());
        let phi = PhiSpec::power(4.0);
        group.bench_function(BenchmarkId::from_parameter(n), |b| b.iter(|| grad_i(&km, &phi, black_box(&u))));
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_minimize");
    group.sample_size(10);
    for n in [32, 64] {
        let g = grid(n);
        let km = KernelMatrix::assemble(&KernelSpec::power_global(0.5, 2.0), &g, Mode::Dirichlet).unwrap();
        let scheme = Scheme::new(SchemeConfig {
            horizon: 1e-2,
            n_steps: 10,
            lambda: 1e-2,
            phi: PhiSpec::power(2.0),
            kernel: km,
            operator: OperatorL::laplacian_dirichlet(&g).unwrap(),
            potential: Potential::obstacle(),
            mass_mode: MassMode::Free,
            inner: InnerSettings::default(),
        })
        .unwrap();
        let u0 = g.sample(|x| 0.8 * (PI * x[0]).cos());
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| scheme.step_minimize(black_box(&u0)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, gradient, step);
criterion_main!(benches);
