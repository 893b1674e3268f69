use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use w2reg::data::{generate, split, SyntheticSpec};
use w2reg::distribution::{w2_distance, SamplePair};
use w2reg::model::{backward, cross_entropy_grad, forward, ModelParams};
use w2reg::regularizer::{pseudo_grad, GroupCdfPair};
use w2reg::trainer::{train_regularized, TrainConfig};
use w2reg::Group;

fn uniform(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn bench_w2(c: &mut Criterion) {
    let mut group = c.benchmark_group("w2_distance");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [64, 1024, 16384] {
        let pair = SamplePair::new(uniform(n, &mut rng), uniform(n, &mut rng)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &pair, |b, pair| {
            b.iter(|| w2_distance(black_box(pair), 10 * n).unwrap())
        });
    }
    group.finish();
}

fn bench_pseudo_grad(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s0 = uniform(20, &mut rng);
    let s1: Vec<f64> = uniform(20, &mut rng).iter().map(|x| x * 0.5).collect();
    c.bench_function("cdf_pair_from_32_refs", |b| {
        b.iter(|| GroupCdfPair::from_samples(black_box(&s0), black_box(&s1), 100, 700, 700).unwrap())
    });
    let cdfs = GroupCdfPair::from_samples(&s0, &s1, 100, 700, 700).unwrap();
    c.bench_function("pseudo_grad", |b| {
        b.iter(|| pseudo_grad(black_box(0.37), Group::One, &cdfs, 1.0))
    });
}

fn bench_mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ModelParams::init(&[10, 64, 64, 4], &mut rng).unwrap();
    let x = Array2::from_shape_fn((32, 10), |_| rng.random_range(-3.0..3.0));
    let labels: Vec<usize> = (0..32).map(|i| i % 4).collect();
    c.bench_function("mlp_forward_backward_batch32", |b| {
        b.iter(|| {
            let trace = forward(&params, x.view()).unwrap();
            let g = cross_entropy_grad(trace.probs.view(), &labels).unwrap();
            backward(&params, &trace, g.view()).unwrap()
        })
    });
}

fn bench_epoch(c: &mut Criterion) {
    let data = generate(&SyntheticSpec::acceptance(0)).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        lambda: 40.0,
        ..TrainConfig::default()
    };
    let splits = split(&data, cfg.split, 0).unwrap();
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    group.bench_function("regularized_one_class", |b| {
        b.iter(|| train_regularized(&splits, &cfg, &[2]).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_w2, bench_pseudo_grad, bench_mlp, bench_epoch);
criterion_main!(benches);
