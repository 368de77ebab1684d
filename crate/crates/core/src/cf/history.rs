use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ItemId;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub item: ItemId,
    pub liked: bool,
    pub timestamp: i64,
}

impl HistoryEntry {
    pub fn new(item: ItemId, liked: bool, timestamp: i64) -> Self {
        Self {
            item,
            liked,
            timestamp,
        }
    }
}

/// The most recent `capacity` interactions of a user, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionHistory {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl InteractionHistory {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    /// Keeps the last `capacity` of `entries`, which must be time-ordered.
    pub fn from_entries(
        capacity: usize,
        entries: impl IntoIterator<Item = HistoryEntry>,
    ) -> Result<Self> {
        let mut h = Self::new(capacity);
        for e in entries {
            h.push(e)?;
        }
        Ok(h)
    }

    /// Appends an entry, evicting the oldest one at capacity.
    pub fn push(&mut self, entry: HistoryEntry) -> Result<()> {
        if let Some(last) = self.entries.back() {
            if entry.timestamp < last.timestamp {
                return Err(invalid(format!(
                    "history entry at t={} precedes the latest entry at t={}",
                    entry.timestamp, last.timestamp
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.back()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &HistoryEntry> + '_ {
        self.entries.iter()
    }

    pub fn liked_items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().filter(|e| e.liked).map(|e| e.item)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.entries.iter().any(|e| e.item == item)
    }

    /// A copy with the most recent entry replaced; the timestamp is kept.
    pub fn with_last_replaced(&self, item: ItemId, liked: bool) -> Option<Self> {
        let mut copy = self.clone();
        let last = copy.entries.back_mut()?;
        last.item = item;
        last.liked = liked;
        Some(copy)
    }
}
