//! Online binary regression tree whose leaves hold experience samples and
//! unfetched frontier entries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{best_split, Split};
use super::FrontierEntry;
use crate::error::{Error, Result};
use crate::graph::StateActionVector;
use crate::qlearn::QFunction;

/// Whether a step picks a random representative or the highest-valued one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    Explore,
    Greedy,
}

#[derive(Debug, Clone, Default)]
struct Leaf {
    experience: Vec<(StateActionVector, u8)>,
    frontier: Vec<FrontierEntry>,
}

#[derive(Debug, Clone)]
enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// Outcome of one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub entry: FrontierEntry,
    /// Node id of the leaf the entry came from.
    pub leaf: usize,
    /// Online Q-value of the entry when it was scored.
    pub q_value: Option<f64>,
    /// Q-network evaluations spent on this selection.
    pub q_evals: usize,
    /// Number of representatives drawn.
    pub representatives: usize,
    /// Stored frontier entries at selection time, before removal.
    pub frontier_size: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub leaf_count: usize,
    pub experience: usize,
    pub frontier_size: usize,
    pub splits: u64,
    pub q_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotInternal {
    pub id: usize,
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLeaf {
    pub id: usize,
    pub experience: usize,
    pub relevant: usize,
    pub frontier: usize,
}

/// Structure and per-leaf counts, for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub internal: Vec<SnapshotInternal>,
    pub leaves: Vec<SnapshotLeaf>,
}

/// The tree frontier. Node 0 is the root; node ids never change, so a leaf
/// id is stable until that leaf splits.
#[derive(Debug, Clone)]
pub struct TreeFrontier {
    nodes: Vec<Node>,
    leaf_count: usize,
    experience: usize,
    frontier_size: usize,
    splits: u64,
    q_evals: u64,
    /// Drop every drawn representative, not just the selected one.
    remove_unselected: bool,
}

impl Default for TreeFrontier {
    fn default() -> Self {
        Self::new()
    }
}

impl TreeFrontier {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node::Leaf(Leaf::default())],
            leaf_count: 1,
            experience: 0,
            frontier_size: 0,
            splits: 0,
            q_evals: 0,
            remove_unselected: false,
        }
    }

    pub fn with_literal_removal(mut self, on: bool) -> Self {
        self.remove_unselected = on;
        self
    }

    /// Id of the leaf that `x` routes to.
    pub fn route(&self, x: &StateActionVector) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x.get(*feature) < *threshold { *left } else { *right },
                Node::Leaf(_) => return id,
            }
        }
    }

    fn leaf_mut(&mut self, id: usize) -> &mut Leaf {
        match &mut self.nodes[id] {
            Node::Leaf(l) => l,
            Node::Internal { .. } => unreachable!("node {id} is internal"),
        }
    }

    /// Adds a labelled sample to its leaf and splits that leaf if a
    /// positive variance reduction exists. Returns the split, if any.
    pub fn insert_experience(&mut self, x: StateActionVector, reward: u8) -> Option<Split> {
        let id = self.route(&x);
        self.experience += 1;
        let leaf = self.leaf_mut(id);
        leaf.experience.push((x, reward));
        let split = best_split(&leaf.experience)?;
        self.split_leaf(id, split);
        Some(split)
    }

    fn split_leaf(&mut self, id: usize, split: Split) {
        let left_id = self.nodes.len();
        let right_id = left_id + 1;
        let old = std::mem::replace(
            &mut self.nodes[id],
            Node::Internal {
                feature: split.feature,
                threshold: split.threshold,
                left: left_id,
                right: right_id,
            },
        );
        let Node::Leaf(old) = old else {
            unreachable!("split target is a leaf")
        };
        let goes_left = |x: &StateActionVector| x.get(split.feature) < split.threshold;
        let (mut left, mut right) = (Leaf::default(), Leaf::default());
        for s in old.experience {
            if goes_left(&s.0) {
                left.experience.push(s);
            } else {
                right.experience.push(s);
            }
        }
        for e in old.frontier {
            if goes_left(&e.x) {
                left.frontier.push(e);
            } else {
                right.frontier.push(e);
            }
        }
        self.nodes.push(Node::Leaf(left));
        self.nodes.push(Node::Leaf(right));
        self.leaf_count += 1;
        self.splits += 1;
    }

    pub fn insert_frontier(&mut self, entry: FrontierEntry) {
        let id = self.route(&entry.x);
        self.frontier_size += 1;
        self.leaf_mut(id).frontier.push(entry);
    }

    pub fn extend_frontier(&mut self, entries: impl IntoIterator<Item = FrontierEntry>) {
        for e in entries {
            self.insert_frontier(e);
        }
    }

    /// Draws one entry uniformly from each non-empty leaf, in leaf-id order.
    /// Entries rejected by `valid` are removed from their leaf and the draw
    /// is repeated; a leaf left without valid entries yields nothing. Returns
    /// (leaf id, index within leaf). A leaf with one entry consumes no
    /// randomness.
    pub fn sample_representatives<R, F>(&mut self, rng: &mut R, mut valid: F) -> Vec<(usize, usize)>
    where
        R: Rng + ?Sized,
        F: FnMut(&FrontierEntry) -> bool,
    {
        let mut reps = Vec::new();
        let mut purged = 0;
        for (id, node) in self.nodes.iter_mut().enumerate() {
            let Node::Leaf(leaf) = node else { continue };
            while !leaf.frontier.is_empty() {
                let n = leaf.frontier.len();
                let i = if n == 1 { 0 } else { rng.gen_range(0..n) };
                if valid(&leaf.frontier[i]) {
                    reps.push((id, i));
                    break;
                }
                leaf.frontier.swap_remove(i);
                purged += 1;
            }
        }
        self.frontier_size -= purged;
        reps
    }

    /// Removes every entry rejected by `valid`, keeping the order of the rest.
    pub fn purge<F: FnMut(&FrontierEntry) -> bool>(&mut self, mut valid: F) -> usize {
        let mut purged = 0;
        for node in &mut self.nodes {
            if let Node::Leaf(leaf) = node {
                let before = leaf.frontier.len();
                leaf.frontier.retain(|e| valid(e));
                purged += before - leaf.frontier.len();
            }
        }
        self.frontier_size -= purged;
        purged
    }

    fn take(&mut self, leaf: usize, index: usize) -> FrontierEntry {
        self.frontier_size -= 1;
        self.leaf_mut(leaf).frontier.swap_remove(index)
    }

    fn entry(&self, leaf: usize, index: usize) -> &FrontierEntry {
        match &self.nodes[leaf] {
            Node::Leaf(l) => &l.frontier[index],
            Node::Internal { .. } => unreachable!("node {leaf} is internal"),
        }
    }

    /// Selects one representative: uniformly in explore mode, by highest
    /// Q-value in greedy mode with ties going to the lowest leaf id. Only
    /// greedy mode evaluates the Q-function, once per representative.
    pub fn select<R, F>(&mut self, mode: SelectMode, q: &dyn QFunction, rng: &mut R, valid: F) -> Result<Selection>
    where
        R: Rng + ?Sized,
        F: FnMut(&FrontierEntry) -> bool,
    {
        let reps = self.sample_representatives(rng, valid);
        if reps.is_empty() {
            return Err(Error::FrontierExhausted);
        }
        let frontier_size = self.frontier_size;
        let (pick, q_value, q_evals) = match mode {
            SelectMode::Explore => {
                let k = if reps.len() == 1 { 0 } else { rng.gen_range(0..reps.len()) };
                (k, None, 0)
            }
            SelectMode::Greedy => {
                let mut best = (0, f64::NEG_INFINITY);
                for (k, &(leaf, i)) in reps.iter().enumerate() {
                    let v = q.q(&self.entry(leaf, i).x);
                    if v > best.1 {
                        best = (k, v);
                    }
                }
                (best.0, Some(best.1), reps.len())
            }
        };
        self.q_evals += q_evals as u64;
        let (leaf, index) = reps[pick];
        let entry = self.take(leaf, index);
        if self.remove_unselected {
            self.drop_representatives(&reps, pick);
        }
        Ok(Selection {
            entry,
            leaf,
            q_value,
            q_evals,
            representatives: reps.len(),
            frontier_size,
        })
    }

    fn drop_representatives(&mut self, reps: &[(usize, usize)], picked: usize) {
        for (k, &(leaf, index)) in reps.iter().enumerate() {
            if k != picked {
                self.take(leaf, index);
            }
        }
    }

    /// Baseline that scores the whole frontier every step. Invalid entries
    /// are purged first and representatives are drawn exactly as in
    /// [`select`](Self::select); explore mode picks among them, greedy mode
    /// takes the best entry overall (ties go to the lowest leaf id, then the
    /// lowest position). Every valid entry is scored in both modes.
    pub fn select_synchronous<R, F>(
        &mut self,
        mode: SelectMode,
        q: &dyn QFunction,
        rng: &mut R,
        valid: F,
    ) -> Result<Selection>
    where
        R: Rng + ?Sized,
        F: FnMut(&FrontierEntry) -> bool,
    {
        self.purge(valid);
        let reps = self.sample_representatives(rng, |_| true);
        if reps.is_empty() {
            return Err(Error::FrontierExhausted);
        }
        let frontier_size = self.frontier_size;
        let mut best: Option<(usize, usize, f64)> = None;
        for (id, node) in self.nodes.iter().enumerate() {
            let Node::Leaf(leaf) = node else { continue };
            for (i, e) in leaf.frontier.iter().enumerate() {
                let v = q.q(&e.x);
                if best.is_none_or(|b| v > b.2) {
                    best = Some((id, i, v));
                }
            }
        }
        self.q_evals += frontier_size as u64;
        let (leaf, index, q_value) = match mode {
            SelectMode::Explore => {
                let k = if reps.len() == 1 { 0 } else { rng.gen_range(0..reps.len()) };
                let (leaf, index) = reps[k];
                (leaf, index, q.q(&self.entry(leaf, index).x))
            }
            SelectMode::Greedy => best.expect("frontier is non-empty"),
        };
        let entry = self.take(leaf, index);
        Ok(Selection {
            entry,
            leaf,
            q_value: Some(q_value),
            q_evals: frontier_size,
            representatives: reps.len(),
            frontier_size,
        })
    }

    /// One full update: add the new experience (possibly splitting its
    /// leaf), add the new frontier entries, then select.
    #[allow(clippy::too_many_arguments)]
    pub fn update<R, F>(
        &mut self,
        e_new: Option<(StateActionVector, u8)>,
        f_new: Vec<FrontierEntry>,
        mode: SelectMode,
        q: &dyn QFunction,
        rng: &mut R,
        valid: F,
    ) -> Result<(Selection, Option<Split>)>
    where
        R: Rng + ?Sized,
        F: FnMut(&FrontierEntry) -> bool,
    {
        let split = e_new.and_then(|(x, r)| self.insert_experience(x, r));
        self.extend_frontier(f_new);
        let sel = self.select(mode, q, rng, valid)?;
        Ok((sel, split))
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn frontier_size(&self) -> usize {
        self.frontier_size
    }

    pub fn q_evaluation_count(&self) -> u64 {
        self.q_evals
    }

    pub fn stats(&self) -> TreeStats {
        TreeStats {
            leaf_count: self.leaf_count,
            experience: self.experience,
            frontier_size: self.frontier_size,
            splits: self.splits,
            q_evals: self.q_evals,
        }
    }

    /// Leaf ids in ascending order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Leaf(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Experience samples stored in a leaf; empty for internal or unknown ids.
    pub fn leaf_experience(&self, id: usize) -> &[(StateActionVector, u8)] {
        match self.nodes.get(id) {
            Some(Node::Leaf(l)) => &l.experience,
            _ => &[],
        }
    }

    pub fn leaf_frontier(&self, id: usize) -> &[FrontierEntry] {
        match self.nodes.get(id) {
            Some(Node::Leaf(l)) => &l.frontier,
            _ => &[],
        }
    }

    /// Predicates `(feature, threshold, goes_left)` from the root to `id`.
    pub fn path_to(&self, id: usize) -> Option<Vec<(usize, f64, bool)>> {
        fn walk(nodes: &[Node], at: usize, target: usize, acc: &mut Vec<(usize, f64, bool)>) -> bool {
            if at == target {
                return true;
            }
            if let Node::Internal {
                feature,
                threshold,
                left,
                right,
            } = nodes[at]
            {
                for (child, is_left) in [(left, true), (right, false)] {
                    acc.push((feature, threshold, is_left));
                    if walk(nodes, child, target, acc) {
                        return true;
                    }
                    acc.pop();
                }
            }
            false
        }
        let mut acc = Vec::new();
        walk(&self.nodes, 0, id, &mut acc).then_some(acc)
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        let mut internal = Vec::new();
        let mut leaves = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => internal.push(SnapshotInternal {
                    id,
                    feature: *feature,
                    threshold: *threshold,
                    left: *left,
                    right: *right,
                }),
                Node::Leaf(l) => leaves.push(SnapshotLeaf {
                    id,
                    experience: l.experience.len(),
                    relevant: l.experience.iter().filter(|(_, r)| *r == 1).count(),
                    frontier: l.frontier.len(),
                }),
            }
        }
        TreeSnapshot { internal, leaves }
    }
}
