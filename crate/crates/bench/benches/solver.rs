use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use rotgpe_bench::{initial_field, rotating_systems};
use rotgpe_core::groundstate::{dngf, GradientFlowConfig, SeedProfile};
use rotgpe_core::{Scheme, Stepper, StepperConfig};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assembly");
    for n in [32, 64] {
        let sys = rotating_systems(n);
        let u = initial_field(&sys);
        group.bench_with_input(BenchmarkId::new("l_matrix", n), &n, |b, _| {
            b.iter(|| black_box(sys.space().assemble_l(sys.coeffs())))
        });
        group.bench_with_input(BenchmarkId::new("cubic_residual", n), &n, |b, _| {
            b.iter(|| black_box(sys.space().cubic_residual(&u, 100.0)))
        });
        group.bench_with_input(BenchmarkId::new("cubic_jacobian", n), &n, |b, _| {
            b.iter(|| black_box(sys.space().cubic_jacobian(&u, 100.0)))
        });
    }
    group.finish();
}

fn stepping(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    group.sample_size(10);
    for n in [32, 64] {
        let sys = rotating_systems(n);
        let u = initial_field(&sys);
        for scheme in [Scheme::Irk, Scheme::BackwardEuler] {
            let mut stepper = Stepper::new(&sys, StepperConfig::new(scheme, 0.1, 0.1).unwrap()).unwrap();
            group.bench_with_input(BenchmarkId::new(scheme.name(), n), &n, |b, _| {
                b.iter(|| black_box(stepper.step(&u, 0.0, 0.1, None).unwrap()))
            });
        }
    }
    group.finish();
}

fn ground_state(c: &mut Criterion) {
    let mut group = c.benchmark_group("groundstate");
    group.sample_size(10);
    let sys = rotating_systems(32);
    let cfg = GradientFlowConfig {
        tau_flow: 0.2,
        max_steps: 200,
        tol: 1e-300,
        seed: SeedProfile::RotatingMix { omega: 0.8 },
        energy_tol: None,
    };
    group.bench_function("flow_200_steps_32", |b| b.iter(|| black_box(dngf(&sys, &cfg).err())));
    group.finish();
}

criterion_group!(benches, assembly, stepping, ground_state);
criterion_main!(benches);
