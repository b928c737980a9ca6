use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use treecrawl_core::qlearn::{
    ddqn_target, train_step, Activation, AgentConfig, DdqnAgent, Optimizer, OptimizerKind, QNetwork, ReplayBuffer,
    ReplayRecord,
};
use treecrawl_core::{QFunction, StateActionVector};

fn random_vec(rng: &mut ChaCha8Rng) -> StateActionVector {
    let v: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    StateActionVector::new(&v).unwrap()
}

fn net(seed: u64, activation: Activation) -> QNetwork {
    QNetwork::new(&[8, 64, 32, 1], activation, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Central-difference estimate of d loss / d params, one parameter at a time.
fn numeric_gradient(net: &QNetwork, inputs: &[&[f64]], targets: &[f64], h: f64) -> Vec<f64> {
    let base = net.params();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_params(&p);
            let up = probe.loss_and_gradients(inputs, targets).unwrap().0;
            p[i] = base[i] - h;
            probe.set_params(&p);
            let down = probe.loss_and_gradients(inputs, targets).unwrap().0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn tanh_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let net = QNetwork::new(&[8, 5, 5, 1], Activation::Tanh, &mut rng);
    let xs: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng).as_slice().to_vec()).collect();
    let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let targets = [1.0, 0.0, 0.5, 1.9];
    let analytic = net.loss_and_gradients(&inputs, &targets).unwrap().1.flatten();
    let numeric = numeric_gradient(&net, &inputs, &targets, 1e-6);
    for (a, n) in analytic.iter().zip(&numeric) {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        assert!(rel < 1e-5, "analytic {a} vs numeric {n}");
    }
}

#[test]
fn forward_stays_finite_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for activation in [Activation::Relu, Activation::Tanh] {
        let q = net(8, activation);
        for _ in 0..10_000 {
            let x = random_vec(&mut rng);
            assert!(q.q(&x).is_finite());
        }
    }
}

#[test]
fn seeded_records_have_unit_targets() {
    let mut replay = ReplayBuffer::new(16);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let seeds: Vec<StateActionVector> = (0..3).map(|_| random_vec(&mut rng)).collect();
    replay.seed(&seeds);
    let (online, target) = (net(1, Activation::Relu), net(2, Activation::Relu));
    for r in replay.iter() {
        assert_eq!(ddqn_target(r, &online, &target, 0.9), 1.0);
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut replay = ReplayBuffer::new(10);
    for i in 0..10 {
        let mut v = [0.0; 8];
        v[0] = i as f64;
        replay.push(ReplayRecord {
            x: StateActionVector::new(&v).unwrap(),
            reward: 0,
            next_actions: Vec::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = [0usize; 10];
    for r in replay.sample(100_000, &mut rng) {
        counts[r.x.get(0) as usize] += 1;
    }
    let expected = 10_000.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(9.0).unwrap().inverse_cdf(1.0 - 1e-4);
    assert!(stat < critical, "{counts:?}");
}

#[test]
fn agent_learns_a_separable_reward() {
    let cfg = AgentConfig {
        gamma: 0.0,
        ..Default::default()
    };
    let mut agent = DdqnAgent::new(8, cfg, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<StateActionVector> = (0..400).map(|_| random_vec(&mut rng)).collect();
    let label = |x: &StateActionVector| u8::from(x.get(3) > 0.5);
    for x in &data {
        agent.replay.push(ReplayRecord {
            x: *x,
            reward: label(x),
            next_actions: Vec::new(),
        });
    }
    let first = agent.train_minibatch().unwrap().unwrap();
    for _ in 0..3000 {
        agent.train_minibatch().unwrap();
    }
    let mse = data
        .iter()
        .map(|x| (agent.q(x) - f64::from(label(x))).powi(2))
        .sum::<f64>()
        / data.len() as f64;
    assert!(mse < 0.05 && mse < first, "mse {mse}, first loss {first}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_networks_give_the_max_form_target(
        seed in any::<u64>(),
        reward in 0u8..2,
        gamma in 0.0f64..1.0,
        n_next in 1usize..20,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = net(seed, Activation::Relu);
        let record = ReplayRecord {
            x: random_vec(&mut rng),
            reward,
            next_actions: (0..n_next).map(|_| random_vec(&mut rng)).collect(),
        };
        let max_q = record.next_actions.iter().map(|x| q.q(x)).fold(f64::NEG_INFINITY, f64::max);
        let expected = f64::from(reward) + gamma * max_q;
        let got = ddqn_target(&record, &q, &q.clone(), gamma);
        prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn a_small_step_reduces_single_record_loss(
        seed in any::<u64>(),
        reward in 0u8..2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut online = net(seed, Activation::Relu);
        let target = online.clone();
        let record = ReplayRecord {
            x: random_vec(&mut rng),
            reward,
            next_actions: Vec::new(),
        };
        let y = f64::from(reward);
        let before = (online.q(&record.x) - y).powi(2);
        prop_assume!(before > 1e-8);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1e-3);
        let reported = train_step(&mut online, &target, &[&record], 0.9, &mut opt).unwrap();
        prop_assert!((reported - before).abs() <= 1e-12 * before.max(1.0));
        let after = (online.q(&record.x) - y).powi(2);
        prop_assert!(after < before, "before {} after {}", before, after);
    }
}
