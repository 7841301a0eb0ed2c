use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use ei_probe::measure::{ei_joint, ei_parts, sensitivity};
use ei_probe::{measure_all, ActivationKind, LayerSlice, PerturbationConfig};
use ei_probe_bench::network;

fn single_edge(c: &mut Criterion) {
    let slice = LayerSlice::single_edge(2.5, ActivationKind::Sigmoid).unwrap();
    let cfg = PerturbationConfig::new(100_000, 64, 0);
    c.bench_function("single_edge_measure_all_1e5", |b| {
        b.iter(|| measure_all(black_box(&slice), &cfg).unwrap())
    });
}

fn layer_measures(c: &mut Criterion) {
    let net = network(&[6, 6], 3);
    let slice = LayerSlice::from_network(&net, 0).unwrap();
    let mut g = c.benchmark_group("layer_6x6");
    g.sample_size(10);
    for samples in [10_000u64, 100_000] {
        let cfg = PerturbationConfig::new(samples, 8, 0);
        g.bench_with_input(BenchmarkId::new("ei_joint", samples), &cfg, |b, cfg| {
            b.iter(|| ei_joint(&slice, cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("ei_parts", samples), &cfg, |b, cfg| {
            b.iter(|| ei_parts(&slice, cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("sensitivity", samples), &cfg, |b, cfg| {
            b.iter(|| sensitivity(&slice, cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("measure_all", samples), &cfg, |b, cfg| {
            b.iter(|| measure_all(&slice, cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, single_edge, layer_measures);
criterion_main!(benches);
