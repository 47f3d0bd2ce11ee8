//! Full subproblem passes and short solver runs, sequential against parallel.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slblr::engine::{run, EngineConfig, InitialMultipliers};
use slblr::model::gap::gap_to_separable;
use slblr::model::GapInstance;
use slblr::subproblem::{full_pass, SolverLimits};
use slblr::Execution;
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn full_passes(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_pass");
    for (machines, jobs) in [(10, 200), (20, 400)] {
        let p = gap_to_separable(&GapInstance::type_d(machines, jobs, 1).unwrap()).unwrap();
        let lambda = vec![101.0; p.row_count()];
        let limits = SolverLimits::default();
        for (label, exec) in MODES {
            group.bench_with_input(
                BenchmarkId::new(label, format!("{machines}x{jobs}")),
                &p,
                |b, p| b.iter(|| full_pass(p, black_box(&lambda), &limits, exec).unwrap()),
            );
        }
    }
    group.finish();
}

fn short_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_100_iterations");
    group.sample_size(10);
    let p = gap_to_separable(&GapInstance::type_d(10, 200, 1).unwrap()).unwrap();
    for (label, exec) in MODES {
        let mut cfg = EngineConfig::slblr(0.5, 100);
        cfg.initial = InitialMultipliers::Constant { value: 101.0 };
        cfg.execution = exec;
        group.bench_function(label, |b| b.iter(|| run(&p, cfg.clone()).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, full_passes, short_runs);
criterion_main!(benches);
