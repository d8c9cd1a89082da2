use criterion::{black_box, criterion_group, criterion_main, Criterion};

use factlab::metrics::spearman;
use factlab::model::TrainConfig;
use factlab::rng::seeded;
use factlab::selection::{lower_percentile, select_losshf};
use factlab::theory::{mi_bruteforce, random_toy_world};
use factlab_bench::{batch, desk_model, losses, table};

fn model(c: &mut Criterion) {
    let t = table(500);
    let b = batch(&t, 64);
    let state = desk_model();
    c.bench_function("forward_b64", |bch| bch.iter(|| state.model.sum_losses(black_box(&b)).unwrap()));
    let cfg = TrainConfig::default();
    c.bench_function("train_step_b64", |bch| {
        let mut s = state.clone();
        bch.iter(|| s.train_step(black_box(&b), None, &cfg).unwrap())
    });
}

fn selection(c: &mut Criterion) {
    let l = losses(640);
    c.bench_function("lower_percentile_640", |b| b.iter(|| lower_percentile(black_box(&l), 0.1)));
    let mut rng = seeded(3);
    c.bench_function("select_losshf_640", |b| b.iter(|| select_losshf(black_box(&l), 0.1, &mut rng)));
}

fn metrics(c: &mut Criterion) {
    let a = losses(10_000);
    let w: Vec<f64> = (1..=10_000).map(|i| 1.0 / i as f64).collect();
    c.bench_function("spearman_10k", |b| b.iter(|| spearman(black_box(&a), black_box(&w))));
    let mut rng = seeded(4);
    let worlds: Vec<_> = (0..16).map(|_| random_toy_world(&mut rng)).collect();
    c.bench_function("mi_bruteforce_16_worlds", |b| {
        b.iter(|| {
            for (world, n) in &worlds {
                black_box(mi_bruteforce(world, *n).unwrap());
            }
        })
    });
}

criterion_group!(benches, model, selection, metrics);
criterion_main!(benches);
