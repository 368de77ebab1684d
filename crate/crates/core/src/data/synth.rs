use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::records::{Rating, RatingRecord};
use crate::cf::{logistic, ItemId, UserId};
use crate::error::{invalid, Result};

/// Parameters of the clustered generator. Users belong to one cluster, with
/// a weaker interest in one other cluster, and pick items by softmax over
/// latent affinity; the softmax sharpness grows
/// linearly over the horizon, so later interactions concentrate on the
/// user's own cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    pub interactions_per_user: usize,
    /// Length of the synthetic timeline in seconds.
    pub horizon: i64,
    pub seed: u64,
    pub latent_dim: usize,
    pub item_noise: f64,
    pub user_noise: f64,
    /// Weight of each user's secondary cluster in the user factor; zero
    /// gives single-interest users.
    pub secondary_weight: f64,
    pub sharpness_start: f64,
    pub sharpness_end: f64,
    /// Slope of the like probability in affinity.
    pub like_scale: f64,
    /// Affinity at which a like is a coin flip.
    pub like_midpoint: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 300,
            n_clusters: 3,
            interactions_per_user: 60,
            horizon: 90 * 86_400,
            seed: 0,
            latent_dim: 16,
            item_noise: 0.35,
            user_noise: 0.35,
            secondary_weight: 0.5,
            sharpness_start: 2.0,
            sharpness_end: 6.0,
            like_scale: 6.0,
            like_midpoint: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 {
            return Err(invalid("synthetic dataset needs at least one user and one item"));
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_items {
            return Err(invalid(format!(
                "n_clusters = {} must lie in 1..={} (n_items)",
                self.n_clusters, self.n_items
            )));
        }
        if self.n_clusters > self.latent_dim {
            return Err(invalid(format!(
                "n_clusters = {} exceeds latent_dim = {}",
                self.n_clusters, self.latent_dim
            )));
        }
        if self.interactions_per_user > self.n_items {
            return Err(invalid(format!(
                "interactions_per_user = {} exceeds n_items = {}",
                self.interactions_per_user, self.n_items
            )));
        }
        if self.horizon < 3 {
            return Err(invalid("horizon must be at least 3 seconds"));
        }
        for (name, v) in [
            ("item_noise", self.item_noise),
            ("user_noise", self.user_noise),
            ("secondary_weight", self.secondary_weight),
            ("sharpness_start", self.sharpness_start),
            ("sharpness_end", self.sharpness_end),
            ("like_scale", self.like_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if !self.like_midpoint.is_finite() {
            return Err(invalid("like_midpoint must be finite"));
        }
        Ok(())
    }

    /// Boundaries at one and two thirds of the horizon.
    pub fn boundaries(&self) -> [i64; 2] {
        [self.horizon / 3, 2 * self.horizon / 3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub records: Vec<RatingRecord>,
    pub user_cluster: Vec<usize>,
    pub item_cluster: Vec<usize>,
    pub boundaries: [i64; 2],
}

impl SynthDataset {
    /// Share of each user's likes that fall in the user's own cluster,
    /// pooled over users.
    pub fn own_cluster_like_share(&self) -> f64 {
        let likes = self.records.iter().filter(|r| r.rating == Rating::Scaled(4.0) || r.rating == Rating::Scaled(5.0));
        let (mut own, mut all) = (0usize, 0usize);
        for r in likes {
            all += 1;
            own += usize::from(self.user_cluster[r.user.index()] == self.item_cluster[r.item.index()]);
        }
        if all == 0 {
            0.0
        } else {
            own as f64 / all as f64
        }
    }
}

/// Generates scaled ratings (likes 4 or 5, dislikes 1 to 3) sorted by
/// timestamp, then user.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let l = cfg.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Cluster centroids are distinct coordinate axes after a random rotation
    // of the axis labels, so they are orthonormal.
    let mut axes: Vec<usize> = (0..l).collect();
    for i in (1..l).rev() {
        axes.swap(i, rng.random_range(0..=i));
    }
    let centroid = |c: usize| -> Vec<f64> {
        let mut v = vec![0.0; l];
        v[axes[c]] = 1.0;
        v
    };
    let noisy = |rng: &mut ChaCha8Rng, c: usize, sd: f64| -> Vec<f64> {
        let scale = sd / (l as f64).sqrt();
        centroid(c).into_iter().map(|x| x + scale * normal.sample(rng)).collect()
    };

    // Every cluster gets at least one item.
    let item_cluster: Vec<usize> = (0..cfg.n_items)
        .map(|i| if i < cfg.n_clusters { i } else { rng.random_range(0..cfg.n_clusters) })
        .collect();
    let items: Vec<Vec<f64>> = item_cluster.iter().map(|&c| noisy(&mut rng, c, cfg.item_noise)).collect();
    let user_cluster: Vec<usize> = (0..cfg.n_users).map(|_| rng.random_range(0..cfg.n_clusters)).collect();
    let users: Vec<Vec<f64>> = user_cluster
        .iter()
        .map(|&c| {
            let mut g = noisy(&mut rng, c, cfg.user_noise);
            if cfg.n_clusters > 1 {
                let other = (c + rng.random_range(1..cfg.n_clusters)) % cfg.n_clusters;
                g[axes[other]] += cfg.secondary_weight;
            }
            g
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.n_users * cfg.interactions_per_user);
    for (u, gu) in users.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(u as u64 + 1);
        let affinity: Vec<f64> = items.iter().map(|gi| crate::cf::dot(gu, gi)).collect();
        let mut times: Vec<i64> = (0..cfg.interactions_per_user).map(|_| rng.random_range(0..cfg.horizon)).collect();
        times.sort_unstable();
        let mut seen = vec![false; cfg.n_items];
        for t in times {
            let frac = t as f64 / cfg.horizon as f64;
            let s = cfg.sharpness_start + (cfg.sharpness_end - cfg.sharpness_start) * frac;
            let max = affinity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = affinity
                .iter()
                .zip(&seen)
                .map(|(&a, &done)| if done { 0.0 } else { (s * (a - max)).exp() })
                .collect();
            let v = WeightedIndex::new(&weights).expect("unseen item remains").sample(&mut rng);
            seen[v] = true;
            let p_like = logistic(cfg.like_scale * (affinity[v] - cfg.like_midpoint));
            let rating = if rng.random::<f64>() < p_like {
                rng.random_range(4..=5)
            } else {
                rng.random_range(1..=3)
            };
            records.push(RatingRecord {
                user: UserId(u as u32),
                item: ItemId(v as u32),
                rating: Rating::Scaled(f64::from(rating)),
                timestamp: t,
            });
        }
    }
    records.sort_by_key(|r| (r.timestamp, r.user, r.item));
    Ok(SynthDataset {
        records,
        user_cluster,
        item_cluster,
        boundaries: cfg.boundaries(),
    })
}
