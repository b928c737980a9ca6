use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::StateActionVector;

/// One transition: the chosen state-action, its reward, and the action
/// vectors extracted from the fetched page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub x: StateActionVector,
    pub reward: u8,
    pub next_actions: Vec<StateActionVector>,
}

/// Fixed-capacity FIFO experience store with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    records: VecDeque<ReplayRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            records: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, record: ReplayRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    /// One record per seed, reward 1, no next actions.
    pub fn seed(&mut self, seed_vectors: &[StateActionVector]) {
        for x in seed_vectors {
            self.push(ReplayRecord {
                x: *x,
                reward: 1,
                next_actions: Vec::new(),
            });
        }
    }

    /// `batch` records drawn uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a ReplayRecord> {
        if self.records.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| &self.records[rng.gen_range(0..self.records.len())])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayRecord> {
        self.records.iter()
    }
}
