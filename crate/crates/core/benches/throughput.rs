//! Evaluation throughput, sequential against the rayon worker pool.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ripplecot::dataset_io::{DatasetDescriptor, SyntheticConfig};
use ripplecot::eval::{Harness, Method, RunConfig};
use ripplecot::exec::Execution;

const CASES: usize = 200;

fn harness(method: Method, execution: Execution) -> Harness {
    let mut cfg = RunConfig {
        method,
        dataset: DatasetDescriptor::synthetic(SyntheticConfig {
            case_count: CASES,
            seed: 7,
            ..SyntheticConfig::default()
        }),
        seed: 7,
        execution,
        ..RunConfig::default()
    };
    cfg.retrieval.g = CASES;
    Harness::prepare(cfg).expect("synthetic harness")
}

fn throughput(c: &mut Criterion) {
    let mut group = c.benchmark_group("eval");
    group.sample_size(10);
    for method in [Method::Ripplecot, Method::RipplecotRetrieval] {
        for (label, execution) in
            [("sequential", Execution::Sequential), ("parallel4", Execution::Parallel { width: 4 })]
        {
            let h = harness(method, execution);
            group.bench_with_input(BenchmarkId::new(method.as_str(), label), &h, |b, h| b.iter(|| black_box(h.run())));
        }
    }
    group.finish();
}

criterion_group!(benches, throughput);
criterion_main!(benches);
