use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ssnkit::diagnostics::{error_bound_estimate, SampleSpec, Tolerances};
use ssnkit::exec::Execution;
use ssnkit::experiments::{basis_pursuit_experiment, lasso_instance, lasso_solution};
use ssnkit::manifold::SupportManifold;
use ssnkit::residual::ResidualKind;
use ssnkit::verify::bd_comparisons;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn error_bound(c: &mut Criterion) {
    let inst = lasso_instance(0).unwrap();
    let x = lasso_solution(&inst).unwrap();
    let sys = inst.residual_system(ResidualKind::Pgm, None).unwrap();
    let oracle = inst.solution_set(&x).unwrap();
    let full = SupportManifold::full(x.len());
    let tol = Tolerances::default();
    let spec = SampleSpec { radius: 1e-4, samples: 256, seed: 0 };
    let mut group = c.benchmark_group("error_bound_256_samples");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| error_bound_estimate(&sys, &x, &full, Some(&oracle), spec, &tol, exec).unwrap())
        });
    }
    group.finish();
}

fn basis_pursuit_sweep(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("basis_pursuit_8_seeds");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| basis_pursuit_experiment(&seeds, exec).unwrap())
        });
    }
    group.finish();
}

fn bd_enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("bd_equivalence_50");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| bd_comparisons(50, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, error_bound, basis_pursuit_sweep, bd_enumeration);
criterion_main!(benches);
