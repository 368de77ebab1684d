//! Base collaborative-filtering model.
//!
//! The score of item `v` for user `u` with history `h` is
//! `logistic(<user_vec(u) + mean(liked items of h), item_vec(v)>)`.
//! Disliked history entries do not enter the encoder.

mod grouping;
mod history;
mod model;
mod train;

pub use grouping::{group_items, Grouping};
pub use history::{HistoryEntry, InteractionHistory};
pub(crate) use model::{dot, score_candidates};
pub use model::{
    logistic, rank_top_k, recommend, EmbeddingModel, Hyper, PreferenceScore, Scorer,
    CHECKPOINT_VERSION,
};
pub use train::{train, train_from, TrainOutcome, TrainingData};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ItemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for UserId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
