//! Compares the data-parallel code paths against single-lane execution on the
//! workloads that dominate runtime: scenario sampling, the convergence
//! harness, and bootstrap resampling. With `--no-default-features` both sides
//! run sequentially and the comparison collapses to a sanity baseline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sievekit::dgp::{builtin_scenario, run_convergence_study, sample, EstimatorKind, ScenarioId};
use sievekit::uncertainty::{bootstrap_ci, BootstrapPlan};

#[cfg(feature = "parallel")]
fn with_lanes<T>(lanes: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    rayon::ThreadPoolBuilder::new()
        .num_threads(lanes)
        .build()
        .expect("thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_lanes<T>(_lanes: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    f()
}

fn bench_sample(c: &mut Criterion) {
    let spec = builtin_scenario(ScenarioId::D1);
    let mut group = c.benchmark_group("sample_d1_200k");
    for lanes in [1usize, num_lanes()] {
        group.bench_with_input(BenchmarkId::from_parameter(lanes), &lanes, |b, &lanes| {
            b.iter(|| with_lanes(lanes, || sample(&spec, 200_000, 7).unwrap().len()));
        });
    }
    group.finish();
}

fn bench_convergence(c: &mut Criterion) {
    let spec = builtin_scenario(ScenarioId::D3NoRatio);
    let kinds = [EstimatorKind::CcsObserved, EstimatorKind::CcsExposureConditional];
    let mut group = c.benchmark_group("convergence_d3_50x5000");
    group.sample_size(10);
    for lanes in [1usize, num_lanes()] {
        group.bench_with_input(BenchmarkId::from_parameter(lanes), &lanes, |b, &lanes| {
            b.iter(|| with_lanes(lanes, || run_convergence_study(&spec, &[5000], 50, &kinds, 3).unwrap().rows.len()));
        });
    }
    group.finish();
}

fn bench_bootstrap(c: &mut Criterion) {
    let spec = builtin_scenario(ScenarioId::D1);
    let records = sample(&spec, 4000, 11).unwrap().subjects().unwrap();
    let plan = BootstrapPlan::new(500, 13, 0.05).unwrap();
    let mut group = c.benchmark_group("bootstrap_mean_500x4000");
    group.sample_size(10);
    for lanes in [1usize, num_lanes()] {
        group.bench_with_input(BenchmarkId::from_parameter(lanes), &lanes, |b, &lanes| {
            b.iter(|| {
                with_lanes(lanes, || {
                    bootstrap_ci(&records, &plan, |s| {
                        let infected = s.iter().filter(|r| r.outcome.code() > 0).count();
                        Ok(infected as f64 / s.len() as f64)
                    })
                    .unwrap()
                })
            });
        });
    }
    group.finish();
}

fn num_lanes() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4).max(2)
}

criterion_group!(benches, bench_sample, bench_convergence, bench_bootstrap);
criterion_main!(benches);
