use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::compensated_mean;
use crate::cf::{EmbeddingModel, ItemId, UserId};
use crate::error::{invalid, Error, Result};

/// Mean Euclidean distance over all unordered pairs.
pub fn content_diversity(vectors: &[&[f64]]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "content diversity needs at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    let mut dists = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for (i, a) in vectors.iter().enumerate() {
        for b in &vectors[i + 1..] {
            if a.len() != b.len() {
                return Err(invalid("embedding dimensions differ"));
            }
            dists.push(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    Ok(compensated_mean(dists))
}

/// Diversity of a recommendation list in the model's item space.
pub fn list_diversity(model: &EmbeddingModel, items: &[ItemId]) -> Result<f64> {
    let vecs = items.iter().map(|&v| model.item_vec(v)).collect::<Result<Vec<_>>>()?;
    content_diversity(&vecs)
}

/// One phase's recommendation lists and the model whose item embeddings
/// measure them.
#[derive(Debug, Clone, Copy)]
pub struct PhaseRecs<'a> {
    pub phase: usize,
    pub model: &'a EmbeddingModel,
    pub recs: &'a BTreeMap<UserId, Vec<ItemId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityDelta {
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub per_phase_diversity: BTreeMap<usize, f64>,
    pub users_scored: BTreeMap<usize, usize>,
    pub users_skipped: BTreeMap<usize, usize>,
    /// Every ordered pair of distinct phases, `value = d(from) - d(to)`.
    pub deltas: Vec<DiversityDelta>,
}

impl DiversityReport {
    pub fn delta(&self, from: usize, to: usize) -> Option<f64> {
        self.deltas.iter().find(|d| d.from == from && d.to == to).map(|d| d.value)
    }
}

pub fn diversity_change(phases: &[PhaseRecs<'_>]) -> Result<DiversityReport> {
    if phases.len() < 2 {
        return Err(invalid(format!("diversity change needs at least 2 phases, got {}", phases.len())));
    }
    let mut report = DiversityReport {
        per_phase_diversity: BTreeMap::new(),
        users_scored: BTreeMap::new(),
        users_skipped: BTreeMap::new(),
        deltas: Vec::new(),
    };
    for p in phases {
        if report.per_phase_diversity.contains_key(&p.phase) {
            return Err(invalid(format!("phase {} listed twice", p.phase)));
        }
        let mut values = Vec::with_capacity(p.recs.len());
        let mut skipped = 0;
        for items in p.recs.values() {
            if items.len() < 2 {
                skipped += 1;
                continue;
            }
            values.push(list_diversity(p.model, items)?);
        }
        if skipped > 0 {
            log::warn!("phase {}: {skipped} users with fewer than 2 recommendations skipped", p.phase);
        }
        report.users_scored.insert(p.phase, values.len());
        report.users_skipped.insert(p.phase, skipped);
        report.per_phase_diversity.insert(p.phase, compensated_mean(values));
    }
    for (&i, &di) in &report.per_phase_diversity {
        for (&j, &dj) in &report.per_phase_diversity {
            if i != j {
                report.deltas.push(DiversityDelta { from: i, to: j, value: di - dj });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(content_diversity(&[&[0.0, 0.0], &[3.0, 4.0]]).unwrap(), 5.0);
        let d = content_diversity(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!((d - (2.0 + 2f64.sqrt()) / 3.0).abs() < 1e-12);
        assert!((d - 1.1381).abs() < 1e-4);
        assert_eq!(content_diversity(&[&[0.7, 0.1], &[0.7, 0.1], &[0.7, 0.1]]).unwrap(), 0.0);
        assert!(content_diversity(&[&[1.0]]).is_err());
    }

    #[test]
    fn delta_between_phases() {
        let m = EmbeddingModel::from_tables(vec![vec![0.0, 0.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p1: BTreeMap<_, _> = [(UserId(0), vec![ItemId(0), ItemId(1)])].into();
        let p2: BTreeMap<_, _> = [(UserId(0), vec![ItemId(0), ItemId(0)]), (UserId(1), vec![ItemId(1)])].into();
        let r = diversity_change(&[
            PhaseRecs { phase: 1, model: &m, recs: &p1 },
            PhaseRecs { phase: 2, model: &m, recs: &p2 },
        ])
        .unwrap();
        assert!((r.delta(1, 2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.delta(1, 2).unwrap(), -r.delta(2, 1).unwrap());
        assert_eq!(r.users_skipped[&2], 1);
        let same = diversity_change(&[
            PhaseRecs { phase: 1, model: &m, recs: &p1 },
            PhaseRecs { phase: 2, model: &m, recs: &p1 },
        ])
        .unwrap();
        assert_eq!(same.delta(1, 2), Some(0.0));
        assert!(diversity_change(&[PhaseRecs { phase: 1, model: &m, recs: &p1 }]).is_err());
    }
}
