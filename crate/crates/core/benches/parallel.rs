use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hcrb_core::estimators::EstimatorConfig;
use hcrb_core::exec::Execution;
use hcrb_core::experiments::{monte_carlo_point, reference_range_sweep, run_range_sweep};
use hcrb_core::scenario::reference_at_range;
use hcrb_core::synth::{SegmentationConfig, TargetModel};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn monte_carlo(c: &mut Criterion) {
    let sc = reference_at_range(20.0).unwrap();
    let seg = SegmentationConfig::default();
    let est = EstimatorConfig::default();
    let mut g = c.benchmark_group("monte_carlo_16_trials");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                monte_carlo_point(&sc, &seg, &est, TargetModel::Extended, 7, 16, exec).unwrap()
            })
        });
    }
    g.finish();
}

fn range_sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("range_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = reference_range_sweep(7);
        cfg.execution = exec;
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_range_sweep(cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, range_sweep);
criterion_main!(benches);
