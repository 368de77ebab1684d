use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{InteractionHistory, ItemId, UserId};
use crate::error::{invalid, Error, Result};
use crate::exec::{try_map_indexed, Execution};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Training hyper-parameters. Defaults: 64-dim embeddings, learning rate
/// 0.001, l2 weight 1e-6, history capacity 10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Sampled negatives per liked training example.
    pub negatives_per_positive: usize,
    pub history_cap: usize,
    pub init_std: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            learning_rate: 0.001,
            l2_weight: 1e-6,
            epochs: 20,
            seed: 0,
            negatives_per_positive: 4,
            history_cap: 10,
            init_std: 0.1,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(invalid("embedding_dim must be positive"));
        }
        if self.history_cap == 0 {
            return Err(invalid("history_cap must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be finite and non-negative"));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return Err(invalid("l2_weight must be finite and non-negative"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(invalid("init_std must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Estimated probability that the user likes the item.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreferenceScore(f64);

impl PreferenceScore {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(invalid(format!("preference score {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anything that estimates `P(like | user, item, history)`.
pub trait Scorer: Sync {
    fn n_items(&self) -> usize;

    fn score(&self, user: UserId, item: ItemId, history: &InteractionHistory) -> Result<PreferenceScore>;

    /// Scores for many items under one history. Must agree exactly with
    /// [`Scorer::score`].
    fn score_items(&self, user: UserId, history: &InteractionHistory, items: &[ItemId]) -> Result<Vec<f64>> {
        items
            .iter()
            .map(|&v| self.score(user, v, history).map(PreferenceScore::value))
            .collect()
    }
}

/// User and item embedding tables, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    version: u32,
    k: usize,
    n_users: usize,
    n_items: usize,
    hyper: Hyper,
    user_vecs: Vec<f64>,
    item_vecs: Vec<f64>,
}

impl EmbeddingModel {
    /// Gaussian initialisation with mean 0 and `hyper.init_std`, seeded.
    pub fn init(n_users: usize, n_items: usize, hyper: &Hyper) -> Result<Self> {
        hyper.validate()?;
        let k = hyper.embedding_dim;
        let normal = Normal::new(0.0, hyper.init_std).map_err(|e| invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let user_vecs = (0..n_users * k).map(|_| normal.sample(&mut rng)).collect();
        let item_vecs = (0..n_items * k).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self {
            version: CHECKPOINT_VERSION,
            k,
            n_users,
            n_items,
            hyper: hyper.clone(),
            user_vecs,
            item_vecs,
        })
    }

    /// Builds a model from explicit tables, one row per id.
    pub fn from_tables(users: Vec<Vec<f64>>, items: Vec<Vec<f64>>) -> Result<Self> {
        let k = users
            .first()
            .or(items.first())
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("embedding tables".into()))?;
        if k == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        if users.iter().chain(&items).any(|r| r.len() != k) {
            return Err(invalid("all embedding rows must have the same length"));
        }
        if users.iter().chain(&items).flatten().any(|x| !x.is_finite()) {
            return Err(invalid("embeddings must be finite"));
        }
        let hyper = Hyper {
            embedding_dim: k,
            ..Hyper::default()
        };
        Ok(Self {
            version: CHECKPOINT_VERSION,
            k,
            n_users: users.len(),
            n_items: items.len(),
            hyper,
            user_vecs: users.concat(),
            item_vecs: items.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub(crate) fn set_hyper(&mut self, hyper: Hyper) {
        self.hyper = hyper;
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> {
        (0..self.n_items as u32).map(ItemId)
    }

    pub fn user_vec(&self, user: UserId) -> Result<&[f64]> {
        let u = user.index();
        if u >= self.n_users {
            return Err(Error::UnknownUser(user.0));
        }
        Ok(&self.user_vecs[u * self.k..(u + 1) * self.k])
    }

    pub fn item_vec(&self, item: ItemId) -> Result<&[f64]> {
        let v = item.index();
        if v >= self.n_items {
            return Err(Error::UnknownItem(item.0));
        }
        Ok(&self.item_vecs[v * self.k..(v + 1) * self.k])
    }

    pub(crate) fn user_vecs_mut(&mut self) -> &mut [f64] {
        &mut self.user_vecs
    }

    pub(crate) fn item_vecs_mut(&mut self) -> &mut [f64] {
        &mut self.item_vecs
    }

    pub(crate) fn tables(&self) -> (&[f64], &[f64]) {
        (&self.user_vecs, &self.item_vecs)
    }

    /// `user_vec(u) + mean of liked history item vectors`.
    pub fn encode(&self, user: UserId, history: &InteractionHistory) -> Result<Vec<f64>> {
        let mut q = self.user_vec(user)?.to_vec();
        let liked: Vec<ItemId> = history.liked_items().collect();
        if !liked.is_empty() {
            let mut mean = vec![0.0; self.k];
            for v in &liked {
                for (m, x) in mean.iter_mut().zip(self.item_vec(*v)?) {
                    *m += x;
                }
            }
            let n = liked.len() as f64;
            for (qi, m) in q.iter_mut().zip(&mean) {
                *qi += m / n;
            }
        }
        Ok(q)
    }

    /// Dot product of two item embeddings.
    pub fn similarity(&self, a: ItemId, b: ItemId) -> Result<f64> {
        Ok(dot(self.item_vec(a)?, self.item_vec(b)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.version != CHECKPOINT_VERSION {
            return Err(invalid(format!(
                "checkpoint version {} not supported (expected {CHECKPOINT_VERSION})",
                model.version
            )));
        }
        if model.user_vecs.len() != model.n_users * model.k || model.item_vecs.len() != model.n_items * model.k {
            return Err(invalid("checkpoint tables do not match their declared shape"));
        }
        Ok(model)
    }
}

impl Scorer for EmbeddingModel {
    fn n_items(&self) -> usize {
        self.n_items
    }

    fn score(&self, user: UserId, item: ItemId, history: &InteractionHistory) -> Result<PreferenceScore> {
        let q = self.encode(user, history)?;
        PreferenceScore::new(logistic(dot(&q, self.item_vec(item)?)))
    }

    fn score_items(&self, user: UserId, history: &InteractionHistory, items: &[ItemId]) -> Result<Vec<f64>> {
        let q = self.encode(user, history)?;
        items
            .iter()
            .map(|&v| Ok(logistic(dot(&q, self.item_vec(v)?))))
            .collect()
    }
}

/// Sorts by descending score, ties by ascending item id, and keeps `k`.
pub fn rank_top_k(mut scored: Vec<(ItemId, f64)>, k: usize) -> Vec<(ItemId, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

const SCORE_CHUNK: usize = 512;

/// Scores `candidates` in chunks, possibly in parallel; output order matches
/// the input.
pub(crate) fn score_candidates<F>(candidates: &[ItemId], exec: Execution, score_chunk: F) -> Result<Vec<f64>>
where
    F: Fn(&[ItemId]) -> Result<Vec<f64>> + Sync + Send,
{
    let chunks: Vec<&[ItemId]> = candidates.chunks(SCORE_CHUNK).collect();
    let scored = try_map_indexed(chunks.len(), exec, |i| score_chunk(chunks[i]))?;
    Ok(scored.concat())
}

/// Top-`k` items by score, skipping `exclude`. Fewer than `k` candidates
/// yields a shorter list.
pub fn recommend<S: Scorer>(
    model: &S,
    user: UserId,
    history: &InteractionHistory,
    k: usize,
    exclude: &HashSet<ItemId>,
    exec: Execution,
) -> Result<Vec<(ItemId, f64)>> {
    if k == 0 {
        return Err(invalid("recommendation list length k must be at least 1"));
    }
    let candidates: Vec<ItemId> = (0..model.n_items() as u32)
        .map(ItemId)
        .filter(|v| !exclude.contains(v))
        .collect();
    let scores = score_candidates(&candidates, exec, |chunk| model.score_items(user, history, chunk))?;
    Ok(rank_top_k(candidates.into_iter().zip(scores).collect(), k))
}
