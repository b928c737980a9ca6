//! Double DQN: the online network picks the best next action, the target
//! network evaluates it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Optimizer, OptimizerKind, QNetwork};
use super::replay::{ReplayBuffer, ReplayRecord};
use crate::error::{Error, Result};
use crate::graph::StateActionVector;

/// Anything that scores a state-action vector.
pub trait QFunction {
    fn q(&self, x: &StateActionVector) -> f64;
}

impl QFunction for QNetwork {
    fn q(&self, x: &StateActionVector) -> f64 {
        self.forward(x.as_slice())
            .expect("state-action dimension matches the network")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub target_sync_every: u64,
    pub hidden: [usize; 2],
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub replay_capacity: usize,
    /// Cap on stored next-action vectors per replay record.
    pub max_next_actions: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the crawl budget over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 1e-3,
            batch_size: 32,
            target_sync_every: 100,
            hidden: [64, 32],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            replay_capacity: 10_000,
            max_next_actions: 256,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.2,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.target_sync_every == 0 || self.replay_capacity == 0 {
            return bad("batch size, sync period and replay capacity must be positive");
        }
        if self.hidden.contains(&0) || self.max_next_actions == 0 {
            return bad("hidden sizes and next-action cap must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..=1.0).contains(&self.epsilon_decay_fraction)
        {
            return bad("epsilon schedule values must lie in [0, 1]");
        }
        Ok(())
    }

    /// Exploration probability at step `t` of a crawl with `budget` steps.
    pub fn epsilon(&self, t: u64, budget: u64) -> f64 {
        let decay_steps = (self.epsilon_decay_fraction * budget as f64).max(1.0);
        let frac = (t as f64 / decay_steps).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// `r + gamma * Q_target(x')` where `x'` maximizes `Q_online` over the
/// record's next actions; just `r` when there are none.
pub fn ddqn_target(record: &ReplayRecord, online: &dyn QFunction, target: &dyn QFunction, gamma: f64) -> f64 {
    let r = f64::from(record.reward);
    let mut best: Option<(f64, &StateActionVector)> = None;
    for x in &record.next_actions {
        let q = online.q(x);
        if best.is_none_or(|(b, _)| q > b) {
            best = Some((q, x));
        }
    }
    match best {
        Some((_, x)) => r + gamma * target.q(x),
        None => r,
    }
}

/// One gradient step on the squared error against fixed DDQN targets.
/// Returns the loss before the step.
pub fn train_step(
    online: &mut QNetwork,
    target: &QNetwork,
    batch: &[&ReplayRecord],
    gamma: f64,
    optimizer: &mut Optimizer,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty training batch".into()));
    }
    let targets: Vec<f64> = batch
        .iter()
        .map(|r| ddqn_target(r, &*online, target, gamma))
        .collect();
    let inputs: Vec<&[f64]> = batch.iter().map(|r| r.x.as_slice()).collect();
    let (loss, grads) = online.loss_and_gradients(&inputs, &targets)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDivergence(loss));
    }
    optimizer.step(online, &grads);
    if !online.is_finite() {
        return Err(Error::TrainingDivergence(f64::NAN));
    }
    Ok(loss)
}

pub fn sync_target(online: &QNetwork, target: &mut QNetwork) {
    target.clone_from(online);
}

/// Online and target networks, replay buffer and optimizer state.
#[derive(Debug, Clone)]
pub struct DdqnAgent {
    pub online: QNetwork,
    pub target: QNetwork,
    pub replay: ReplayBuffer,
    cfg: AgentConfig,
    optimizer: Optimizer,
    train_steps: u64,
    rng: ChaCha8Rng,
}

impl DdqnAgent {
    pub fn new(input_dim: usize, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [input_dim, cfg.hidden[0], cfg.hidden[1], 1];
        let online = QNetwork::new(&sizes, cfg.activation, &mut rng);
        let target = online.clone();
        Ok(Self {
            online,
            target,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate),
            cfg,
            train_steps: 0,
            rng,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Trains on one uniformly sampled minibatch and syncs the target network
    /// every `target_sync_every` steps. `None` when the replay is empty.
    pub fn train_minibatch(&mut self) -> Result<Option<f64>> {
        if self.replay.is_empty() {
            return Ok(None);
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng);
        let loss = train_step(&mut self.online, &self.target, &batch, self.cfg.gamma, &mut self.optimizer)?;
        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.cfg.target_sync_every) {
            sync_target(&self.online, &mut self.target);
        }
        Ok(Some(loss))
    }

    pub fn q(&self, x: &StateActionVector) -> f64 {
        self.online.q(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Table(Vec<f64>);

    impl QFunction for Table {
        fn q(&self, x: &StateActionVector) -> f64 {
            self.0[x.get(0) as usize]
        }
    }

    fn idx(i: usize) -> StateActionVector {
        StateActionVector::new(&[i as f64, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn gamma_zero_returns_reward() {
        let rec = ReplayRecord {
            x: idx(0),
            reward: 1,
            next_actions: vec![idx(0), idx(1)],
        };
        let q = Table(vec![5.0, 7.0]);
        assert_eq!(ddqn_target(&rec, &q, &q, 0.0), 1.0);
    }

    #[test]
    fn empty_next_actions() {
        let rec = ReplayRecord {
            x: idx(0),
            reward: 1,
            next_actions: vec![],
        };
        let q = Table(vec![5.0]);
        assert_eq!(ddqn_target(&rec, &q, &q, 0.9), 1.0);
    }

    #[test]
    fn online_selects_target_evaluates() {
        let rec = ReplayRecord {
            x: idx(0),
            reward: 1,
            next_actions: vec![idx(0), idx(1), idx(2)],
        };
        let online = Table(vec![0.2, 0.9, 0.5]);
        let target = Table(vec![0.1, 0.4, 0.8]);
        assert!((ddqn_target(&rec, &online, &target, 0.5) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig::default();
        assert_eq!(cfg.epsilon(0, 1000), 1.0);
        assert!((cfg.epsilon(100, 1000) - 0.525).abs() < 1e-12);
        assert!((cfg.epsilon(200, 1000) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon(900, 1000) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn invalid_config() {
        let cfg = AgentConfig {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(DdqnAgent::new(8, cfg, 0).is_err());
    }

    #[test]
    fn periodic_sync() {
        let cfg = AgentConfig {
            target_sync_every: 3,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let mut agent = DdqnAgent::new(6, cfg, 7).unwrap();
        agent.replay.seed(&[idx(1), idx(2)]);
        for step in 1..=7u64 {
            agent.train_minibatch().unwrap();
            let synced = agent.online == agent.target;
            assert_eq!(synced, step % 3 == 0, "step {step}");
        }
    }
}
