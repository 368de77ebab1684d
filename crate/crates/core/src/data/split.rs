use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::records::RatingRecord;
use crate::cf::{HistoryEntry, InteractionHistory, TrainingData, UserId};
use crate::error::{invalid, Result};

/// Phase boundaries used for MovieLens-1m.
pub const DEFAULT_BOUNDARIES: [&str; 2] = ["2000-07-31", "2000-11-20"];

/// Epoch seconds of midnight of an ISO date at the given UTC offset, or a
/// literal integer timestamp.
pub fn parse_date(s: &str, utc_offset_minutes: i32) -> Result<i64> {
    let s = s.trim();
    if let Ok(t) = s.parse::<i64>() {
        return Ok(t);
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| invalid(format!("boundary {s:?} is neither YYYY-MM-DD nor an epoch timestamp: {e}")))?;
    let midnight = date.and_hms_opt(0, 0, 0).expect("midnight exists");
    Ok(midnight.and_utc().timestamp() - i64::from(utc_offset_minutes) * 60)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub phase: usize,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub likes: usize,
}

impl PhaseStats {
    pub fn of(phase: usize, records: &[RatingRecord]) -> Self {
        let users: BTreeSet<_> = records.iter().map(|r| r.user).collect();
        let items: BTreeSet<_> = records.iter().map(|r| r.item).collect();
        Self {
            phase,
            users: users.len(),
            items: items.len(),
            interactions: records.len(),
            likes: records.iter().filter(|r| r.rating.is_like() == Some(true)).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSplit {
    pub boundaries: [i64; 2],
    pub phases: Vec<Vec<RatingRecord>>,
    pub stats: Vec<PhaseStats>,
}

/// Three phases: `t < b1`, `b1 <= t < b2`, `t >= b2`. Input order is kept
/// within each phase.
pub fn phase_split(records: &[RatingRecord], boundaries: [i64; 2]) -> Result<PhaseSplit> {
    let [b1, b2] = boundaries;
    if b1 >= b2 {
        return Err(invalid(format!("phase boundaries must be strictly increasing, got {b1} >= {b2}")));
    }
    let mut phases = vec![Vec::new(), Vec::new(), Vec::new()];
    for r in records {
        let p = if r.timestamp < b1 {
            0
        } else if r.timestamp < b2 {
            1
        } else {
            2
        };
        phases[p].push(*r);
    }
    for (i, p) in phases.iter().enumerate() {
        if p.is_empty() {
            log::warn!("phase {} is empty", i + 1);
        }
    }
    let stats = phases.iter().enumerate().map(|(i, p)| PhaseStats::of(i + 1, p)).collect();
    Ok(PhaseSplit { boundaries, phases, stats })
}

/// Per-user leave-one-out: the last positive is the test target, the one
/// before it the validation target, everything else trains. Order is by
/// timestamp, then item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub train: BTreeMap<UserId, Vec<RatingRecord>>,
    pub validation: BTreeMap<UserId, RatingRecord>,
    pub test: BTreeMap<UserId, RatingRecord>,
    /// Users with fewer than three positives; all their records train.
    pub train_only: Vec<UserId>,
}

fn key(r: &RatingRecord) -> (i64, u32) {
    (r.timestamp, r.item.0)
}

pub fn leave_one_out(records: &[RatingRecord]) -> Result<EvalSplit> {
    let mut by_user: BTreeMap<UserId, Vec<RatingRecord>> = BTreeMap::new();
    for r in records {
        if r.rating.is_like().is_none() {
            return Err(invalid("leave-one-out needs binarized feedback"));
        }
        by_user.entry(r.user).or_default().push(*r);
    }
    let mut split = EvalSplit {
        train: BTreeMap::new(),
        validation: BTreeMap::new(),
        test: BTreeMap::new(),
        train_only: Vec::new(),
    };
    for (user, mut recs) in by_user {
        recs.sort_by_key(key);
        let positives: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].liked()).collect();
        if positives.len() < 3 {
            split.train_only.push(user);
            split.train.insert(user, recs);
            continue;
        }
        let t = positives[positives.len() - 1];
        let v = positives[positives.len() - 2];
        split.test.insert(user, recs[t]);
        split.validation.insert(user, recs[v]);
        let train = recs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != t && i != v)
            .map(|(_, r)| *r)
            .collect();
        split.train.insert(user, train);
    }
    Ok(split)
}

impl EvalSplit {
    /// Users with validation and test targets.
    pub fn eval_users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.test.keys().copied()
    }

    /// The user's interactions strictly before `target` (train and
    /// validation records), truncated to the most recent `cap`.
    pub fn history_before(&self, user: UserId, target: &RatingRecord, cap: usize) -> Result<InteractionHistory> {
        let mut recs: Vec<&RatingRecord> = self
            .train
            .get(&user)
            .into_iter()
            .flatten()
            .chain(self.validation.get(&user))
            .filter(|r| key(r) < key(target))
            .collect();
        recs.sort_by_key(|r| key(r));
        InteractionHistory::from_entries(
            cap,
            recs.into_iter().map(|r| HistoryEntry::new(r.item, r.liked(), r.timestamp)),
        )
    }

    /// Every record the model may learn from: train, plus validation when
    /// `with_validation` is set.
    pub fn training_data(&self, n_users: usize, n_items: usize, with_validation: bool) -> Result<TrainingData> {
        let mut seqs: BTreeMap<UserId, Vec<HistoryEntry>> = BTreeMap::new();
        for (u, recs) in &self.train {
            seqs.entry(*u)
                .or_default()
                .extend(recs.iter().map(|r| HistoryEntry::new(r.item, r.liked(), r.timestamp)));
        }
        if with_validation {
            for (u, r) in &self.validation {
                seqs.entry(*u).or_default().push(HistoryEntry::new(r.item, r.liked(), r.timestamp));
            }
        }
        TrainingData::new(n_users, n_items, seqs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::ItemId;
    use crate::data::Rating;

    fn rec(u: u32, v: u32, liked: bool, t: i64) -> RatingRecord {
        RatingRecord { user: UserId(u), item: ItemId(v), rating: Rating::Binary(liked), timestamp: t }
    }

    #[test]
    fn dates() {
        assert_eq!(parse_date("2000-07-31", 0).unwrap(), 965_001_600);
        assert_eq!(parse_date("2000-11-20", 0).unwrap(), 974_678_400);
        assert_eq!(parse_date("2000-07-31", 60).unwrap(), 965_001_600 - 3600);
        assert_eq!(parse_date("12345", 0).unwrap(), 12345);
        assert!(parse_date("31/07/2000", 0).is_err());
    }

    #[test]
    fn six_records_two_per_phase() {
        let recs: Vec<_> = [5, 9, 10, 15, 20, 99].iter().map(|&t| rec(0, t as u32, true, t)).collect();
        let s = phase_split(&recs, [10, 20]).unwrap();
        assert_eq!(s.phases.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 2]);
        assert_eq!(s.stats[1], PhaseStats { phase: 2, users: 1, items: 2, interactions: 2, likes: 2 });
        let early = phase_split(&recs[..2], [10, 20]).unwrap();
        assert!(early.phases[1].is_empty() && early.phases[2].is_empty());
        assert!(phase_split(&recs, [20, 20]).is_err());
        assert!(phase_split(&recs, [21, 20]).is_err());
    }

    #[test]
    fn loo_basic() {
        let s = leave_one_out(&[rec(1, 30, true, 3), rec(1, 10, true, 1), rec(1, 20, true, 2)]).unwrap();
        assert_eq!(s.train[&UserId(1)], vec![rec(1, 10, true, 1)]);
        assert_eq!(s.validation[&UserId(1)], rec(1, 20, true, 2));
        assert_eq!(s.test[&UserId(1)], rec(1, 30, true, 3));
    }

    #[test]
    fn loo_degenerate_and_ties() {
        let s = leave_one_out(&[rec(2, 1, true, 1), rec(2, 2, true, 2), rec(2, 3, false, 3)]).unwrap();
        assert_eq!(s.train_only, vec![UserId(2)]);
        assert_eq!(s.train[&UserId(2)].len(), 3);
        assert!(s.test.is_empty());

        let s = leave_one_out(&[rec(3, 1, true, 1), rec(3, 9, true, 5), rec(3, 4, true, 5), rec(3, 7, false, 6)]).unwrap();
        assert_eq!(s.test[&UserId(3)].item, ItemId(9));
        assert_eq!(s.validation[&UserId(3)].item, ItemId(4));
        assert_eq!(s.train[&UserId(3)], vec![rec(3, 1, true, 1), rec(3, 7, false, 6)]);
        let h = s.history_before(UserId(3), &s.test[&UserId(3)], 10).unwrap();
        let items: Vec<u32> = h.entries().map(|e| e.item.0).collect();
        assert_eq!(items, vec![1, 4]);
    }
}
