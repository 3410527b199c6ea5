use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use grec_bench::fixture;
use grec_core::{build_index, grouped_recall, recall_at_k, Backend, Distance, EvalConfig, SingletonPolicy};

const SIZES: [usize; 3] = [1000, 2000, 4000];

fn knn_backends(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_query_all");
    group.sample_size(10);
    for rows in SIZES {
        let set = fixture(rows);
        group.throughput(Throughput::Elements(rows as u64));
        for backend in [Backend::BruteForce, Backend::VpTree] {
            let index = build_index(&set, backend, Distance::SquaredEuclidean).unwrap();
            group.bench_with_input(BenchmarkId::new(backend.to_string(), rows), &index, |b, index| {
                b.iter(|| {
                    (0..rows)
                        .map(|q| index.query_knn(q, 1, true).unwrap()[0])
                        .sum::<usize>()
                })
            });
        }
    }
    group.finish();
}

fn full_vs_grouped(c: &mut Criterion) {
    let mut group = c.benchmark_group("recall_brute");
    group.sample_size(10);
    for rows in SIZES {
        let set = fixture(rows);
        group.bench_with_input(BenchmarkId::new("full", rows), &set, |b, set| {
            b.iter(|| {
                recall_at_k(
                    set,
                    1,
                    Backend::BruteForce,
                    Distance::SquaredEuclidean,
                    SingletonPolicy::Skip,
                )
            })
        });
        let config = EvalConfig {
            group_size: Some(10),
            backend: Backend::BruteForce,
            ..EvalConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("grouped", rows), &set, |b, set| {
            b.iter(|| grouped_recall(set, &config))
        });
    }
    group.finish();
}

criterion_group!(benches, knn_backends, full_vs_grouped);
criterion_main!(benches);
