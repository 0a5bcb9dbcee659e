use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use noct_core::models::{vio_constrained, VioConstraintKind};
use noct_core::observability::{build_codistribution, AnalysisOptions};
use noct_core::oracles::{check_conversion, kalman_rank, random_linear, random_small_system};
use noct_core::par::{self, ExecMode};
use noct_core::system::{apply_constraints, GenericCheck};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn codistribution(c: &mut Criterion) {
    let sys = apply_constraints(&vio_constrained(VioConstraintKind::PureTranslation), &GenericCheck::default()).unwrap();
    let mut group = c.benchmark_group("vio_pure_translation_rank");
    group.sample_size(10);
    for (name, mode) in MODES {
        let opts = AnalysisOptions { mode, ..Default::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_codistribution(&sys, &opts).unwrap().rank())
        });
    }
    group.finish();
}

fn oracle_batches(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..50).collect();
    let mut group = c.benchmark_group("oracle_batches");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new("kalman_vs_codistribution", name), |b| {
            b.iter(|| {
                par::map(mode, &seeds, |&s| {
                    let (a, c) = random_linear(s);
                    let sys = noct_core::oracles::linear_system(&a, &c);
                    let opts = AnalysisOptions {
                        mode: ExecMode::Sequential,
                        ..Default::default()
                    };
                    build_codistribution(&sys, &opts).unwrap().rank() == kalman_rank(&a, &c)
                })
            })
        });
        group.bench_function(BenchmarkId::new("conversion_soundness", name), |b| {
            b.iter(|| par::map(mode, &seeds, |&s| check_conversion(&random_small_system(s), &GenericCheck::default(), s).is_ok()))
        });
    }
    group.finish();
}

criterion_group!(benches, codistribution, oracle_batches);
criterion_main!(benches);
