use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use mimo_training::montecarlo::{estimate_ber_with, TrialPlan};
use mimo_training::par::Execution;
use mimo_training::{PowerConfig, Scheme, SystemDims};

// Without the `parallel` feature the parallel arm runs sequentially too.
fn bench_estimate_ber(c: &mut Criterion) {
    let dims = SystemDims::new(4, 2, 32, 2).unwrap();
    let power = PowerConfig::optimal(&dims, 10.0).unwrap();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).max(2);

    for scheme in Scheme::ALL {
        let plan = TrialPlan { scheme, dims, power, n_frames: 2_000, master_seed: 7 };
        let mut group = c.benchmark_group(format!("estimate_ber/{scheme}"));
        group.throughput(Throughput::Elements(plan.n_frames));
        group.sample_size(20);
        group.bench_function(BenchmarkId::new("sequential", plan.n_frames), |b| {
            b.iter(|| estimate_ber_with(&plan, Execution::Sequential).unwrap())
        });
        group.bench_function(BenchmarkId::new(format!("parallel-{workers}"), plan.n_frames), |b| {
            b.iter(|| estimate_ber_with(&plan, Execution::with_workers(workers)).unwrap())
        });
        group.finish();
    }
}

fn bench_large_frames(c: &mut Criterion) {
    let dims = SystemDims::new(16, 8, 256, 64).unwrap();
    let power = PowerConfig::optimal(&dims, 15.0).unwrap();
    let plan = TrialPlan { scheme: Scheme::Tdmt, dims, power, n_frames: 200, master_seed: 7 };
    let mut group = c.benchmark_group("estimate_ber/tdmt-k8");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| estimate_ber_with(&plan, Execution::Sequential).unwrap()));
    group.bench_function("parallel", |b| b.iter(|| estimate_ber_with(&plan, Execution::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_estimate_ber, bench_large_frames);
criterion_main!(benches);
