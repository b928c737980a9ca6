//! Frontier stores: the online tree and a flat list for the random baseline.

mod flat;
mod split;
mod tree;

use serde::{Deserialize, Serialize};

use crate::graph::StateActionVector;

pub use flat::FlatFrontier;
pub use split::{best_split, midpoint, Split, VR_EPSILON};
pub use tree::{Selection, SelectMode, SnapshotInternal, SnapshotLeaf, TreeFrontier, TreeSnapshot, TreeStats};

/// An unfetched candidate URL with the features computed when it was discovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub x: StateActionVector,
    pub url: String,
    pub parent: String,
    pub anchor: String,
    pub inserted_at: u64,
}

impl FrontierEntry {
    pub fn new(
        x: StateActionVector,
        url: impl Into<String>,
        parent: impl Into<String>,
        anchor: impl Into<String>,
        inserted_at: u64,
    ) -> Self {
        Self {
            x,
            url: url.into(),
            parent: parent.into(),
            anchor: anchor.into(),
            inserted_at,
        }
    }
}
