//! Q-value approximation and Double DQN training.

mod agent;
mod mlp;
mod replay;

pub use agent::{ddqn_target, sync_target, train_step, AgentConfig, DdqnAgent, QFunction};
pub use mlp::{Activation, Gradients, Layer, Optimizer, OptimizerKind, QNetwork};
pub use replay::{ReplayBuffer, ReplayRecord};
