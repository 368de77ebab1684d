use std::collections::HashSet;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::compensated_mean;
use crate::cf::ItemId;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub hit: f64,
    pub ndcg: f64,
    pub u_hit: f64,
    pub u_ndcg: f64,
}

/// Full-catalog rank extrapolated from a rank among sampled negatives.
pub fn corrected_rank(rank: usize, n_negatives: usize, catalog_size: usize) -> f64 {
    1.0 + (rank as f64 - 1.0) * (catalog_size as f64 - 1.0) / n_negatives as f64
}

fn cutoff(rank: f64, k: usize) -> (f64, f64) {
    if rank <= k as f64 {
        (1.0, 1.0 / (rank + 1.0).log2())
    } else {
        (0.0, 0.0)
    }
}

/// Hit and nDCG at `k` for a target ranked `rank` (1-based) among itself and
/// `n_negatives` sampled items, raw and with the corrected rank.
pub fn ranking_metrics(rank: usize, k: usize, n_negatives: usize, catalog_size: usize) -> Result<RankMetrics> {
    if k == 0 {
        return Err(invalid("cutoff k must be at least 1"));
    }
    if n_negatives == 0 {
        return Err(invalid("at least one negative is required"));
    }
    if rank == 0 || rank > n_negatives + 1 {
        return Err(invalid(format!("rank {rank} outside 1..={}", n_negatives + 1)));
    }
    if catalog_size < 1 {
        return Err(invalid("catalog size must be positive"));
    }
    let (hit, ndcg) = cutoff(rank as f64, k);
    let (u_hit, u_ndcg) = cutoff(corrected_rank(rank, n_negatives, catalog_size), k);
    Ok(RankMetrics { hit, ndcg, u_hit, u_ndcg })
}

/// 1-based position of the target among the negatives under the usual
/// ordering: descending score, ties to the lower id.
pub fn rank_of_target(target: (ItemId, f64), negatives: &[(ItemId, f64)]) -> usize {
    1 + negatives
        .iter()
        .filter(|(v, s)| *s > target.1 || (*s == target.1 && *v < target.0))
        .count()
}

/// Up to `n` distinct items from `0..n_items` outside `exclude`, in
/// ascending id order.
pub fn sample_negatives(rng: &mut ChaCha8Rng, n_items: usize, exclude: &HashSet<ItemId>, n: usize) -> Vec<ItemId> {
    let pool: Vec<ItemId> = (0..n_items as u32).map(ItemId).filter(|v| !exclude.contains(v)).collect();
    if pool.len() <= n {
        return pool;
    }
    let mut picked: Vec<ItemId> = index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub k: usize,
    pub n_negatives: usize,
    pub catalog_size: usize,
    pub users: usize,
    pub ndcg_at_k: f64,
    pub hit_at_k: f64,
    pub u_ndcg_at_k: f64,
    pub u_hit_at_k: f64,
}

impl RankingReport {
    pub fn from_ranks(ranks: &[usize], k: usize, n_negatives: usize, catalog_size: usize) -> Result<Self> {
        let m = ranks
            .iter()
            .map(|&r| ranking_metrics(r, k, n_negatives, catalog_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k,
            n_negatives,
            catalog_size,
            users: m.len(),
            ndcg_at_k: compensated_mean(m.iter().map(|x| x.ndcg)),
            hit_at_k: compensated_mean(m.iter().map(|x| x.hit)),
            u_ndcg_at_k: compensated_mean(m.iter().map(|x| x.u_ndcg)),
            u_hit_at_k: compensated_mean(m.iter().map(|x| x.u_hit)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fixtures() {
        let r1 = ranking_metrics(1, 10, 100, 3706).unwrap();
        assert_eq!((r1.hit, r1.ndcg, r1.u_hit, r1.u_ndcg), (1.0, 1.0, 1.0, 1.0));
        let r3 = ranking_metrics(3, 10, 100, 3706).unwrap();
        assert_eq!((r3.hit, r3.ndcg), (1.0, 0.5));
        // 1 + 2 * 3705 / 100 = 75.1, past the cutoff.
        assert_eq!((r3.u_hit, r3.u_ndcg), (0.0, 0.0));
        let r11 = ranking_metrics(11, 10, 100, 3706).unwrap();
        assert_eq!((r11.hit, r11.ndcg), (0.0, 0.0));
        assert!(ranking_metrics(102, 10, 100, 3706).is_err());
        assert!(ranking_metrics(0, 10, 100, 3706).is_err());
        assert_eq!(corrected_rank(3, 100, 101), 3.0);
    }

    #[test]
    fn target_rank_ties() {
        let negs = [(ItemId(1), 0.9), (ItemId(5), 0.5), (ItemId(9), 0.5), (ItemId(2), 0.1)];
        assert_eq!(rank_of_target((ItemId(7), 0.5), &negs), 3);
        assert_eq!(rank_of_target((ItemId(0), 1.0), &negs), 1);
        assert_eq!(rank_of_target((ItemId(0), 0.0), &negs), 5);
    }

    #[test]
    fn negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ex: HashSet<ItemId> = [ItemId(3)].into();
        let s = sample_negatives(&mut rng, 50, &ex, 10);
        assert_eq!(s.len(), 10);
        assert!(!s.contains(&ItemId(3)));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_negatives(&mut rng, 5, &ex, 10).len(), 4);
    }

    #[test]
    fn report_means() {
        let r = RankingReport::from_ranks(&[1, 3, 11], 10, 100, 101).unwrap();
        assert!((r.hit_at_k - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.ndcg_at_k - 0.5).abs() < 1e-15);
        assert_eq!(r.users, 3);
    }
}
