//! Back-door-adjusted preference estimation over counterfactual histories.
//!
//! The adjusted score of item `v` is
//! `alpha * P(v | u, x*) + beta * sum_i P(v | u, x'_i)`, where `x*` is the
//! factual history and each `x'_i` differs from it only in the most recent
//! entry. With `n` counterfactuals the weights satisfy `alpha + n beta = 1`
//! and `alpha > beta > 0`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::cf::{rank_top_k, EmbeddingModel, InteractionHistory, ItemId, PreferenceScore, Scorer, UserId};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;

/// How the `n` counterfactual histories are split between edit kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// One preference flip plus `n - 1` swaps to the least similar items.
    #[default]
    FlipAndSwap,
    /// `n` swaps, no preference flip.
    SwapOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualConfig {
    pub n: usize,
    pub alpha: f64,
    pub allocation: Allocation,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        Self {
            n: 9,
            alpha: 0.3,
            allocation: Allocation::FlipAndSwap,
        }
    }
}

impl CounterfactualConfig {
    pub fn validate(&self) -> Result<Weights> {
        assign_weights(self.n, self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    /// Same item, opposite feedback.
    FlipPreference,
    /// A different item, liked.
    SwapItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualEdit {
    pub kind: EditKind,
    pub replaced_item: ItemId,
    pub replaced_feedback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
}

/// `beta = (1 - alpha) / n`, requiring `alpha > beta > 0`. With `n = 0`
/// alpha is forced to one.
pub fn assign_weights(n: usize, alpha: f64) -> Result<Weights> {
    if n == 0 {
        return Ok(Weights { alpha: 1.0, beta: 0.0 });
    }
    let lower = 1.0 / (n as f64 + 1.0);
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    let beta = (1.0 - alpha) / n as f64;
    if !(alpha > beta && beta > 0.0) {
        return Err(invalid(format!(
            "alpha = {alpha} with n = {n} gives beta = {beta}; alpha > beta > 0 requires alpha in ({lower}, 1)"
        )));
    }
    Ok(Weights { alpha, beta })
}

/// The `count` candidates least similar to `v_star`, ascending by
/// similarity with ties to the lower id.
pub fn least_similar_items(
    model: &EmbeddingModel,
    v_star: ItemId,
    count: usize,
    candidates: &[ItemId],
) -> Result<Vec<ItemId>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate items for a counterfactual swap".into()));
    }
    if candidates.contains(&v_star) {
        return Err(invalid(format!("candidate set contains the replaced item {v_star}")));
    }
    if count > candidates.len() {
        return Err(invalid(format!(
            "requested {count} least-similar items from {} candidates",
            candidates.len()
        )));
    }
    let mut scored = candidates
        .iter()
        .map(|&v| Ok((v, model.similarity(v, v_star)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(count).map(|(v, _)| v).collect())
}

/// Items eligible as swap targets: everything not in the factual history.
pub fn default_candidates(model: &EmbeddingModel, factual: &InteractionHistory) -> Vec<ItemId> {
    model.items().filter(|v| !factual.contains(*v)).collect()
}

/// Counterfactual histories obtained by editing the last factual entry.
pub fn generate_counterfactuals(
    model: &EmbeddingModel,
    factual: &InteractionHistory,
    n: usize,
    candidates: &[ItemId],
    allocation: Allocation,
) -> Result<Vec<(CounterfactualEdit, InteractionHistory)>> {
    let last = *factual
        .last()
        .ok_or_else(|| Error::EmptyInput("factual history is empty".into()))?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n);
    let swaps = match allocation {
        Allocation::FlipAndSwap => {
            let edit = CounterfactualEdit {
                kind: EditKind::FlipPreference,
                replaced_item: last.item,
                replaced_feedback: !last.liked,
            };
            let h = factual
                .with_last_replaced(last.item, !last.liked)
                .expect("non-empty history");
            out.push((edit, h));
            n - 1
        }
        Allocation::SwapOnly => n,
    };
    if swaps > 0 {
        for item in least_similar_items(model, last.item, swaps, candidates)? {
            let edit = CounterfactualEdit {
                kind: EditKind::SwapItem,
                replaced_item: item,
                replaced_feedback: true,
            };
            out.push((edit, factual.with_last_replaced(item, true).expect("non-empty history")));
        }
    }
    Ok(out)
}

/// A factual history, its counterfactual variants and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualBundle {
    pub factual: InteractionHistory,
    pub counterfactuals: Vec<InteractionHistory>,
    pub edits: Vec<CounterfactualEdit>,
    pub alpha: f64,
    pub beta: f64,
}

impl CounterfactualBundle {
    /// Bundle with no counterfactuals; adjusted scores equal base scores.
    pub fn factual_only(factual: InteractionHistory) -> Self {
        Self {
            factual,
            counterfactuals: Vec::new(),
            edits: Vec::new(),
            alpha: 1.0,
            beta: 0.0,
        }
    }

    /// Generates counterfactuals against the current embeddings, using every
    /// item outside the factual history as a swap candidate.
    pub fn build(model: &EmbeddingModel, factual: &InteractionHistory, cfg: &CounterfactualConfig) -> Result<Self> {
        let weights = assign_weights(cfg.n, cfg.alpha)?;
        if cfg.n == 0 {
            return Ok(Self::factual_only(factual.clone()));
        }
        let candidates = default_candidates(model, factual);
        let generated = generate_counterfactuals(model, factual, cfg.n, &candidates, cfg.allocation)?;
        let (edits, counterfactuals) = generated.into_iter().unzip();
        Ok(Self {
            factual: factual.clone(),
            counterfactuals,
            edits,
            alpha: weights.alpha,
            beta: weights.beta,
        })
    }

    pub fn n(&self) -> usize {
        self.counterfactuals.len()
    }
}

/// `alpha * factual + beta * sum(counterfactual)`, clamped to the range of
/// its components against rounding.
fn combine(alpha: f64, beta: f64, factual: f64, counterfactual: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut sum = 0.0;
    let mut lo = factual;
    let mut hi = factual;
    let mut any = false;
    for s in counterfactual {
        sum += s;
        lo = lo.min(s);
        hi = hi.max(s);
        any = true;
    }
    if !any {
        return factual;
    }
    (alpha * factual + beta * sum).clamp(lo, hi)
}

/// Back-door-adjusted preference of `user` for `item`.
pub fn adjusted_score<S: Scorer>(
    base: &S,
    user: UserId,
    item: ItemId,
    bundle: &CounterfactualBundle,
) -> Result<PreferenceScore> {
    let factual = base.score(user, item, &bundle.factual)?.value();
    let cf = bundle
        .counterfactuals
        .iter()
        .map(|h| base.score(user, item, h).map(PreferenceScore::value))
        .collect::<Result<Vec<_>>>()?;
    PreferenceScore::new(combine(bundle.alpha, bundle.beta, factual, cf.iter().copied()))
}

/// Adjusted scores for many items; equal to calling [`adjusted_score`] per item.
pub fn adjusted_scores<S: Scorer>(
    base: &S,
    user: UserId,
    items: &[ItemId],
    bundle: &CounterfactualBundle,
) -> Result<Vec<f64>> {
    let factual = base.score_items(user, &bundle.factual, items)?;
    let cf = bundle
        .counterfactuals
        .iter()
        .map(|h| base.score_items(user, h, items))
        .collect::<Result<Vec<_>>>()?;
    Ok(factual
        .iter()
        .enumerate()
        .map(|(i, &f)| combine(bundle.alpha, bundle.beta, f, cf.iter().map(|s| s[i])))
        .collect())
}

/// Top-`k` items by adjusted score with one bundle for the whole list.
#[allow(clippy::too_many_arguments)]
pub fn adjusted_recommend<S: Scorer>(
    base: &S,
    model: &EmbeddingModel,
    user: UserId,
    factual: &InteractionHistory,
    cfg: &CounterfactualConfig,
    k: usize,
    exclude: &HashSet<ItemId>,
    exec: Execution,
) -> Result<Vec<(ItemId, f64)>> {
    if k == 0 {
        return Err(invalid("recommendation list length k must be at least 1"));
    }
    let bundle = if cfg.n == 0 {
        CounterfactualBundle::factual_only(factual.clone())
    } else {
        CounterfactualBundle::build(model, factual, cfg)?
    };
    recommend_with_bundle(base, user, &bundle, k, exclude, exec)
}

/// Top-`k` by adjusted score for a prepared bundle.
pub fn recommend_with_bundle<S: Scorer>(
    base: &S,
    user: UserId,
    bundle: &CounterfactualBundle,
    k: usize,
    exclude: &HashSet<ItemId>,
    exec: Execution,
) -> Result<Vec<(ItemId, f64)>> {
    let candidates: Vec<ItemId> = (0..base.n_items() as u32)
        .map(ItemId)
        .filter(|v| !exclude.contains(v))
        .collect();
    let scores = crate::cf::score_candidates(&candidates, exec, |chunk| adjusted_scores(base, user, chunk, bundle))?;
    Ok(rank_top_k(candidates.into_iter().zip(scores).collect(), k))
}
