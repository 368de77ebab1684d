use crate::cf::{EmbeddingModel, ItemId};
use crate::error::{invalid, Error, Result};

/// Greedy maximal-marginal-relevance selection. Each step takes the argmax
/// of `lambda * relevance - (1 - lambda) * max similarity to the picks so
/// far`; the first pick is the most relevant item. Ties go to the lower id.
/// Returns the picks with their relevance.
pub fn mmr_rerank(
    candidates: &[(ItemId, f64)],
    model: &EmbeddingModel,
    lambda: f64,
    k: usize,
) -> Result<Vec<(ItemId, f64)>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidates to re-rank".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("MMR lambda = {lambda} outside [0, 1]")));
    }
    if k > candidates.len() {
        return Err(invalid(format!("k = {k} exceeds {} candidates", candidates.len())));
    }
    let vecs = candidates
        .iter()
        .map(|&(v, _)| model.item_vec(v))
        .collect::<Result<Vec<_>>>()?;
    let mut max_sim = vec![f64::NEG_INFINITY; candidates.len()];
    let mut taken = vec![false; candidates.len()];
    let mut out = Vec::with_capacity(k);
    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (i, &(v, rel)) in candidates.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let value = if step == 0 {
                rel
            } else {
                lambda * rel - (1.0 - lambda) * max_sim[i]
            };
            let better = match best {
                None => true,
                Some((j, b)) => value > b || (value == b && v < candidates[j].0),
            };
            if better {
                best = Some((i, value));
            }
        }
        let (pick, _) = best.expect("k <= candidates");
        taken[pick] = true;
        out.push(candidates[pick]);
        for (i, s) in max_sim.iter_mut().enumerate() {
            if !taken[i] {
                *s = s.max(crate::cf::dot(vecs[i], vecs[pick]));
            }
        }
    }
    Ok(out)
}
