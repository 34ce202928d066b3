use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hashkit::losses::{hash_likelihood_loss, pairwise_sq_dists, quantization_penalty, triplet_margin_loss, Reduction};
use hashkit::mining::select;
use hashkit::model::{adam_step, backward, forward};
use hashkit::{AdamConfig, AdamState, MlpParams, SelectorKind};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIMS: [usize; 4] = [64, 256, 128, 32];

fn batch(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<u32>) {
    let labels: Vec<u32> = (0..80).map(|i| i / 8).collect();
    let x = Array2::from_shape_fn((80, DIMS[0]), |(i, _)| {
        f64::from(labels[i]) * 0.1 + rng.random_range(-1.0..1.0)
    });
    (x, labels)
}

fn bench_forward_backward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (x, _) = batch(&mut rng);
    let params = MlpParams::init(&DIMS, 1).unwrap();
    let upstream = Array2::from_elem((80, 32), 1e-2);
    c.bench_function("forward_backward_80x64", |b| {
        b.iter(|| {
            let (_, cache) = forward(&params, x.view(), false).unwrap();
            black_box(backward(&params, &cache, upstream.view()).unwrap())
        })
    });
}

fn bench_full_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x, labels) = batch(&mut rng);
    let cfg = AdamConfig::default();
    let mut group = c.benchmark_group("training_step");
    for hash in [false, true] {
        let name = if hash { "hash" } else { "triplet" };
        let mut params = MlpParams::init(&DIMS, 1).unwrap();
        let mut state = AdamState::new(&params);
        let mut mining_rng = ChaCha8Rng::seed_from_u64(5);
        group.bench_function(name, |b| {
            b.iter(|| {
                let (u, cache) = forward(&params, x.view(), !hash).unwrap();
                let d = pairwise_sq_dists(u.view()).unwrap();
                let ts = select(SelectorKind::SemiHard, d.view(), &labels, 1.0, &mut mining_rng).unwrap();
                let grad = if hash {
                    let (_, g1) = hash_likelihood_loss(u.view(), &ts, 4.0, Reduction::Mean).unwrap();
                    let (_, g2) = quantization_penalty(u.view(), 10.0, Reduction::Mean).unwrap();
                    g1 + g2
                } else {
                    triplet_margin_loss(u.view(), &ts, 1.0, Reduction::Mean).unwrap().1
                };
                let grads = backward(&params, &cache, grad.view()).unwrap();
                adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_forward_backward, bench_full_step);
criterion_main!(benches);
