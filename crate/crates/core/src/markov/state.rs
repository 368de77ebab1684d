use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A historical group sequence of fixed length `m`.
///
/// Slots may be empty for a cold history, in which case the empty slots form
/// a prefix. Only full states take part in the chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupState {
    slots: Vec<Option<usize>>,
}

impl GroupState {
    pub fn full(groups: Vec<usize>) -> Self {
        Self {
            slots: groups.into_iter().map(Some).collect(),
        }
    }

    /// A state whose first `empty` slots are not yet filled.
    pub fn with_empty_prefix(empty: usize, groups: Vec<usize>) -> Self {
        let mut slots = vec![None; empty];
        slots.extend(groups.into_iter().map(Some));
        Self { slots }
    }

    pub fn from_slots(slots: Vec<Option<usize>>) -> Self {
        Self { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Option<usize>] {
        &self.slots
    }

    pub fn is_full(&self) -> bool {
        self.slots.iter().all(Option::is_some)
    }

    /// The group labels, if no slot is empty.
    pub fn groups(&self) -> Option<Vec<usize>> {
        self.slots.iter().copied().collect()
    }

    /// Checks length, group range and the empty-prefix rule.
    pub fn validate(&self, d: usize, m: usize) -> Result<()> {
        if self.slots.len() != m {
            return Err(invalid(format!(
                "state has length {}, chain expects m = {m}",
                self.slots.len()
            )));
        }
        let mut seen_full = false;
        for slot in &self.slots {
            match slot {
                None if seen_full => {
                    return Err(invalid("empty slots must form a prefix of the state"));
                }
                None => {}
                Some(g) if *g >= d => {
                    return Err(invalid(format!("group {g} out of range for d = {d}")));
                }
                Some(_) => seen_full = true,
            }
        }
        Ok(())
    }

    /// Drops the oldest slot and appends `group`.
    pub fn push(&mut self, group: usize) {
        if !self.slots.is_empty() {
            self.slots.remove(0);
            self.slots.push(Some(group));
        }
    }

    pub fn is_constant(&self) -> bool {
        match self.slots.first() {
            Some(Some(first)) => self.slots.iter().all(|s| *s == Some(*first)),
            _ => false,
        }
    }
}

impl std::fmt::Display for GroupState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .slots
            .iter()
            .map(|s| s.map_or_else(|| "_".to_string(), |g| g.to_string()))
            .collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Lexicographic indexing of the `d^m` full states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    d: usize,
    m: usize,
    n_states: usize,
    /// `d^(m-1)`, the modulus that drops the oldest group.
    tail: usize,
}

impl StateSpace {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(invalid(format!("need d >= 1 and m >= 1, got d = {d}, m = {m}")));
        }
        let exp = u32::try_from(m).map_err(|_| invalid("m too large"))?;
        let n_states = d.checked_pow(exp).ok_or_else(|| Error::StateSpaceOverflow {
            states: format!("{d}^{m}"),
            cap: usize::MAX,
        })?;
        Ok(Self {
            d,
            m,
            n_states,
            tail: n_states / d,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn index_of(&self, groups: &[usize]) -> usize {
        groups.iter().fold(0, |acc, &g| acc * self.d + g)
    }

    pub fn index(&self, state: &GroupState) -> Result<usize> {
        state.validate(self.d, self.m)?;
        let groups = state
            .groups()
            .ok_or_else(|| invalid("cold (partially empty) histories are not chain states"))?;
        Ok(self.index_of(&groups))
    }

    pub fn groups_of(&self, mut index: usize) -> Vec<usize> {
        let mut groups = vec![0; self.m];
        for slot in groups.iter_mut().rev() {
            *slot = index % self.d;
            index /= self.d;
        }
        groups
    }

    pub fn state(&self, index: usize) -> GroupState {
        GroupState::full(self.groups_of(index))
    }

    /// Index of the state reached from `index` by appending `group`.
    pub fn successor(&self, index: usize, group: usize) -> usize {
        (index % self.tail) * self.d + group
    }

    /// Whether `to` is `from` shifted by one with some group appended.
    pub fn is_shift(&self, from: usize, to: usize) -> bool {
        from % self.tail == to / self.d
    }

    pub fn is_constant(&self, index: usize) -> bool {
        let groups = self.groups_of(index);
        groups.iter().all(|&g| g == groups[0])
    }

    pub fn label(&self, index: usize) -> String {
        self.groups_of(index)
            .iter()
            .map(|g| g.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}
