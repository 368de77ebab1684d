use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{dot, logistic, EmbeddingModel, Hyper};
use super::{HistoryEntry, ItemId, UserId};
use crate::error::{invalid, Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const NEGATIVE_ATTEMPTS: usize = 64;

/// Chronological interaction sequences per user.
#[derive(Debug, Clone)]
pub struct TrainingData {
    n_users: usize,
    n_items: usize,
    sequences: Vec<(UserId, Vec<HistoryEntry>)>,
}

impl TrainingData {
    /// Entries are ordered by timestamp, ties by item id.
    pub fn new(n_users: usize, n_items: usize, sequences: BTreeMap<UserId, Vec<HistoryEntry>>) -> Result<Self> {
        let mut out = Vec::with_capacity(sequences.len());
        for (user, mut seq) in sequences {
            if user.index() >= n_users {
                return Err(Error::UnknownUser(user.0));
            }
            if let Some(e) = seq.iter().find(|e| e.item.index() >= n_items) {
                return Err(Error::UnknownItem(e.item.0));
            }
            seq.sort_by_key(|e| (e.timestamp, e.item));
            if !seq.is_empty() {
                out.push((user, seq));
            }
        }
        Ok(Self {
            n_users,
            n_items,
            sequences: out,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequences(&self) -> &[(UserId, Vec<HistoryEntry>)] {
        &self.sequences
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    /// Mean binary cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a freshly initialised model.
pub fn train(data: &TrainingData, hyper: &Hyper) -> Result<TrainOutcome> {
    let model = EmbeddingModel::init(data.n_users, data.n_items, hyper)?;
    train_from(model, data, hyper)
}

#[derive(Clone, Copy)]
struct Example {
    seq: u32,
    pos: u32,
    item: ItemId,
    label: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, params: &mut [f64], offset: usize, grad: &[f64], lr: f64, step: i32) {
        let c1 = 1.0 - ADAM_BETA1.powi(step);
        let c2 = 1.0 - ADAM_BETA2.powi(step);
        for (j, g) in grad.iter().enumerate() {
            let i = offset + j;
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// `log(1 + e^z) - y z`, the cross-entropy of `logistic(z)` against `y`.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// Continues training `model` (warm start) with Adam on binary
/// cross-entropy: likes are positives, dislikes and sampled non-interacted
/// items are negatives. Each example's history is the preceding
/// `hyper.history_cap` entries of the user's sequence.
pub fn train_from(mut model: EmbeddingModel, data: &TrainingData, hyper: &Hyper) -> Result<TrainOutcome> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data has no interactions".into()));
    }
    if model.dim() != hyper.embedding_dim {
        return Err(invalid(format!(
            "model dimension {} does not match embedding_dim {}",
            model.dim(),
            hyper.embedding_dim
        )));
    }
    if data.n_users > model.n_users() || data.n_items > crate::cf::Scorer::n_items(&model) {
        return Err(invalid("training data references ids beyond the model's tables"));
    }

    let k = model.dim();
    let cap = hyper.history_cap;
    let n_items = data.n_items as u32;
    let interacted: Vec<HashSet<ItemId>> = data
        .sequences
        .iter()
        .map(|(_, s)| s.iter().map(|e| e.item).collect())
        .collect();

    let (users_len, items_len) = {
        let (u, i) = model.tables();
        (u.len(), i.len())
    };
    let mut adam_users = Adam::new(users_len);
    let mut adam_items = Adam::new(items_len);
    let mut step: i32 = 0;

    let mut q = vec![0.0; k];
    let mut g_user = vec![0.0; k];
    let mut item_grads: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut liked: Vec<usize> = Vec::with_capacity(cap);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(1 + epoch as u64);

        let mut examples = Vec::new();
        for (si, (_, seq)) in data.sequences.iter().enumerate() {
            for (pos, entry) in seq.iter().enumerate() {
                let label = if entry.liked { 1.0 } else { 0.0 };
                examples.push(Example {
                    seq: si as u32,
                    pos: pos as u32,
                    item: entry.item,
                    label,
                });
                if !entry.liked {
                    continue;
                }
                for _ in 0..hyper.negatives_per_positive {
                    let neg = (0..NEGATIVE_ATTEMPTS)
                        .map(|_| ItemId(rng.random_range(0..n_items)))
                        .find(|v| !interacted[si].contains(v));
                    if let Some(item) = neg {
                        examples.push(Example {
                            seq: si as u32,
                            pos: pos as u32,
                            item,
                            label: 0.0,
                        });
                    }
                }
            }
        }
        examples.shuffle(&mut rng);

        let mut total = 0.0;
        for ex in &examples {
            let (user, seq) = &data.sequences[ex.seq as usize];
            let pos = ex.pos as usize;
            let u = user.index();
            let v = ex.item.index();

            liked.clear();
            liked.extend(seq[pos.saturating_sub(cap)..pos].iter().filter(|e| e.liked).map(|e| e.item.index()));

            let (users, items) = model.tables();
            let u_row = &users[u * k..(u + 1) * k];
            let v_row = &items[v * k..(v + 1) * k];
            q.copy_from_slice(u_row);
            if !liked.is_empty() {
                let inv = 1.0 / liked.len() as f64;
                for &h in &liked {
                    for (qj, x) in q.iter_mut().zip(&items[h * k..(h + 1) * k]) {
                        *qj += x * inv;
                    }
                }
            }
            let z = dot(&q, v_row);
            total += bce_from_logit(z, ex.label);
            let g = logistic(z) - ex.label;

            for j in 0..k {
                g_user[j] = g * v_row[j] + hyper.l2_weight * u_row[j];
            }
            item_grads.clear();
            item_grads.push((v, (0..k).map(|j| g * q[j] + hyper.l2_weight * v_row[j]).collect()));
            if !liked.is_empty() {
                let scale = g / liked.len() as f64;
                for &h in &liked {
                    let h_row = &items[h * k..(h + 1) * k];
                    let idx = match item_grads.iter().position(|(r, _)| *r == h) {
                        Some(i) => i,
                        None => {
                            item_grads.push((h, h_row.iter().map(|x| hyper.l2_weight * x).collect()));
                            item_grads.len() - 1
                        }
                    };
                    for (gj, x) in item_grads[idx].1.iter_mut().zip(v_row) {
                        *gj += scale * x;
                    }
                }
            }

            step = step.saturating_add(1);
            adam_users.update(model.user_vecs_mut(), u * k, &g_user, hyper.learning_rate, step);
            for (row, grad) in &item_grads {
                adam_items.update(model.item_vecs_mut(), row * k, grad, hyper.learning_rate, step);
            }
        }
        let mean = total / examples.len().max(1) as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6} over {} examples", examples.len());
        epoch_losses.push(mean);
    }

    model.set_hyper(hyper.clone());
    Ok(TrainOutcome { model, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::{InteractionHistory, Scorer};

    fn single_like() -> TrainingData {
        let mut seqs = BTreeMap::new();
        seqs.insert(UserId(0), vec![HistoryEntry::new(ItemId(0), true, 1)]);
        TrainingData::new(1, 1, seqs).unwrap()
    }

    #[test]
    fn overfits_single_like() {
        let hyper = Hyper {
            epochs: 200,
            ..Hyper::default()
        };
        let out = train(&single_like(), &hyper).unwrap();
        let s = out
            .model
            .score(UserId(0), ItemId(0), &InteractionHistory::new(10))
            .unwrap()
            .value();
        assert!(s > 0.9, "score {s}");
    }

    #[test]
    fn same_seed_same_tables() {
        let hyper = Hyper {
            epochs: 5,
            embedding_dim: 8,
            ..Hyper::default()
        };
        let mut seqs = BTreeMap::new();
        for u in 0..4u32 {
            seqs.insert(
                UserId(u),
                (0..6).map(|t| HistoryEntry::new(ItemId((u * 3 + t) % 20), t % 3 != 0, t as i64)).collect(),
            );
        }
        let data = TrainingData::new(4, 20, seqs).unwrap();
        let a = train(&data, &hyper).unwrap();
        let b = train(&data, &hyper).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn zero_epochs_is_initialisation() {
        let hyper = Hyper {
            epochs: 0,
            ..Hyper::default()
        };
        let out = train(&single_like(), &hyper).unwrap();
        assert_eq!(out.model, EmbeddingModel::init(1, 1, &hyper).unwrap());
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn empty_data_rejected() {
        let data = TrainingData::new(1, 1, BTreeMap::new()).unwrap();
        assert!(matches!(train(&data, &Hyper::default()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn bce_matches_direct_formula() {
        for z in [-30.0, -2.0, 0.0, 0.7, 5.0] {
            let s = logistic(z);
            let direct1 = -s.ln();
            let direct0 = -(1.0 - s).ln();
            assert!((bce_from_logit(z, 1.0) - direct1).abs() < 1e-9);
            if z < 20.0 {
                assert!((bce_from_logit(z, 0.0) - direct0).abs() < 1e-9);
            }
        }
    }
}
