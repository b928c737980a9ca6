use rand::Rng;

use super::FrontierEntry;
use crate::error::{Error, Result};

/// Unstructured frontier; selection is uniform over all stored entries.
#[derive(Debug, Clone, Default)]
pub struct FlatFrontier {
    entries: Vec<FrontierEntry>,
}

impl FlatFrontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: FrontierEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = FrontierEntry>) {
        self.entries.extend(entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FrontierEntry] {
        &self.entries
    }

    /// Removes and returns a uniformly drawn entry accepted by `valid`.
    /// Rejected draws are discarded.
    pub fn select<R, F>(&mut self, rng: &mut R, mut valid: F) -> Result<FrontierEntry>
    where
        R: Rng + ?Sized,
        F: FnMut(&FrontierEntry) -> bool,
    {
        while !self.entries.is_empty() {
            let n = self.entries.len();
            let i = if n == 1 { 0 } else { rng.gen_range(0..n) };
            let e = self.entries.swap_remove(i);
            if valid(&e) {
                return Ok(e);
            }
        }
        Err(Error::FrontierExhausted)
    }
}
