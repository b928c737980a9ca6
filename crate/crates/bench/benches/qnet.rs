//! Q-network forward pass and minibatch training cost.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treecrawl_core::graph::StateActionVector;
use treecrawl_core::qlearn::{train_step, Activation, Optimizer, OptimizerKind, QNetwork, ReplayRecord};

fn random_vector(rng: &mut ChaCha8Rng) -> StateActionVector {
    let v: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
    StateActionVector::new(&v).unwrap()
}

fn bench_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = QNetwork::new(&[8, 64, 32, 1], Activation::Relu, &mut rng);
    let x = random_vector(&mut rng);
    c.bench_function("forward_8_64_32_1", |b| b.iter(|| net.forward(black_box(x.as_slice())).unwrap()));
}

fn bench_train_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let online = QNetwork::new(&[8, 64, 32, 1], Activation::Relu, &mut rng);
    let target = online.clone();
    let records: Vec<ReplayRecord> = (0..32)
        .map(|_| ReplayRecord {
            x: random_vector(&mut rng),
            reward: rng.gen_range(0..=1),
            next_actions: (0..20).map(|_| random_vector(&mut rng)).collect(),
        })
        .collect();
    let batch: Vec<&ReplayRecord> = records.iter().collect();
    let mut net = online.clone();
    let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3);
    c.bench_function("train_step_batch32_next20", |b| {
        b.iter(|| train_step(&mut net, &target, black_box(&batch), 0.9, &mut opt).unwrap())
    });
}

criterion_group!(benches, bench_forward, bench_train_step);
criterion_main!(benches);
