use criterion::{criterion_group, criterion_main, Criterion};

use ei_probe::rng;
use ei_probe_bench::{network, synthetic_task};

fn epochs(c: &mut Criterion) {
    let (x, t) = synthetic_task(100, 4, 3);
    c.bench_function("iris_shaped_epoch", |b| {
        let mut net = network(&[4, 5, 5, 3], 0);
        let mut r = rng::seeded(0);
        b.iter(|| net.train_epoch(&x, &t, 10, 0.01, &mut r).unwrap())
    });
    let (x, t) = synthetic_task(1000, 25, 5);
    c.bench_function("mnist5_shaped_epoch", |b| {
        let mut net = network(&[25, 6, 6, 5], 0);
        let mut r = rng::seeded(0);
        b.iter(|| net.train_epoch(&x, &t, 50, 0.01, &mut r).unwrap())
    });
}

criterion_group!(benches, epochs);
criterion_main!(benches);
