use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::compensated_mean;
use crate::causal::{adjusted_scores, CounterfactualBundle, CounterfactualConfig};
use crate::cf::{
    logistic, train, EmbeddingModel, HistoryEntry, Hyper, InteractionHistory, ItemId, Scorer, TrainingData, UserId,
};
use crate::error::{invalid, Error, Result};
use crate::exec::{try_map_indexed, Execution};

/// A fully observed user-item interest table with item attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestMatrix {
    pub n_users: usize,
    pub n_items: usize,
    /// Row-major `n_users x n_items`.
    pub values: Vec<f64>,
    pub attributes: Vec<Vec<u32>>,
    /// Latent cluster of each item.
    pub item_cluster: Vec<usize>,
    pub user_cluster: Vec<usize>,
}

impl InterestMatrix {
    pub fn interest(&self, user: UserId, item: ItemId) -> f64 {
        self.values[user.index() * self.n_items + item.index()]
    }

    pub fn row(&self, user: UserId) -> &[f64] {
        let start = user.index() * self.n_items;
        &self.values[start..start + self.n_items]
    }

    pub fn shares_attribute(&self, a: ItemId, b: ItemId) -> bool {
        let (x, y) = (&self.attributes[a.index()], &self.attributes[b.index()]);
        x.iter().any(|t| y.contains(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterestConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    pub seed: u64,
    pub latent_dim: usize,
    pub noise: f64,
    /// Multiplies the latent inner product before the logistic.
    pub scale: f64,
    pub bias: f64,
    /// Number of extra tags beyond the cluster label.
    pub n_tags: usize,
    /// Probability that an item carries each tag.
    pub tag_prob: f64,
}

impl Default for InterestConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 300,
            n_clusters: 8,
            seed: 0,
            latent_dim: 16,
            noise: 0.35,
            scale: 6.0,
            bias: 3.0,
            n_tags: 20,
            tag_prob: 0.05,
        }
    }
}

/// Interest `logistic(scale * <g_u, g_i> - bias)` with clustered factors
/// around orthonormal centroids. Attribute ids below `n_clusters` are
/// cluster labels, the rest random tags.
pub fn synth_interest_matrix(cfg: &InterestConfig) -> Result<InterestMatrix> {
    if cfg.n_users == 0 || cfg.n_items == 0 {
        return Err(invalid("interest matrix needs at least one user and one item"));
    }
    if cfg.n_clusters == 0 || cfg.n_clusters > cfg.n_items || cfg.n_clusters > cfg.latent_dim {
        return Err(invalid(format!(
            "n_clusters = {} must lie in 1..=min(n_items, latent_dim)",
            cfg.n_clusters
        )));
    }
    if !(0.0..=1.0).contains(&cfg.tag_prob) || !(cfg.noise >= 0.0) || !cfg.scale.is_finite() || !cfg.bias.is_finite() {
        return Err(invalid("interest matrix noise, scale, bias or tag_prob out of range"));
    }
    let l = cfg.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise / (l as f64).sqrt()).expect("finite sd");
    let factor = |rng: &mut ChaCha8Rng, c: usize| -> Vec<f64> {
        (0..l).map(|j| f64::from(u8::from(j == c)) + normal.sample(rng)).collect()
    };
    let item_cluster: Vec<usize> = (0..cfg.n_items)
        .map(|i| if i < cfg.n_clusters { i } else { rng.random_range(0..cfg.n_clusters) })
        .collect();
    let items: Vec<Vec<f64>> = item_cluster.iter().map(|&c| factor(&mut rng, c)).collect();
    let user_cluster: Vec<usize> = (0..cfg.n_users).map(|_| rng.random_range(0..cfg.n_clusters)).collect();
    let users: Vec<Vec<f64>> = user_cluster.iter().map(|&c| factor(&mut rng, c)).collect();
    let attributes = item_cluster
        .iter()
        .map(|&c| {
            let mut a = vec![c as u32];
            for t in 0..cfg.n_tags {
                if rng.random::<f64>() < cfg.tag_prob {
                    a.push((cfg.n_clusters + t) as u32);
                }
            }
            a
        })
        .collect();
    let values = users
        .iter()
        .flat_map(|gu| items.iter().map(move |gi| logistic(cfg.scale * crate::cf::dot(gu, gi) - cfg.bias)))
        .collect();
    Ok(InterestMatrix {
        n_users: cfg.n_users,
        n_items: cfg.n_items,
        values,
        attributes,
        item_cluster,
        user_cluster,
    })
}

/// Scores every item for a user given the current history.
pub trait Policy: Sync {
    fn name(&self) -> &str;
    fn scores(&self, user: UserId, history: &InteractionHistory) -> Result<Vec<f64>>;
}

pub struct BasePolicy<'a> {
    pub model: &'a EmbeddingModel,
}

impl Policy for BasePolicy<'_> {
    fn name(&self) -> &str {
        "base"
    }

    fn scores(&self, user: UserId, history: &InteractionHistory) -> Result<Vec<f64>> {
        let items: Vec<ItemId> = self.model.items().collect();
        self.model.score_items(user, history, &items)
    }
}

/// Back-door-adjusted scores; the bundle is rebuilt from the current
/// history every round. An empty history falls back to base scores.
pub struct CounterfactualPolicy<'a> {
    pub model: &'a EmbeddingModel,
    pub config: CounterfactualConfig,
}

impl Policy for CounterfactualPolicy<'_> {
    fn name(&self) -> &str {
        "dccf"
    }

    fn scores(&self, user: UserId, history: &InteractionHistory) -> Result<Vec<f64>> {
        let items: Vec<ItemId> = self.model.items().collect();
        if history.is_empty() {
            return self.model.score_items(user, history, &items);
        }
        let bundle = CounterfactualBundle::build(self.model, history, &self.config)?;
        adjusted_scores(self.model, user, &items, &bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SatisfactionConfig {
    pub horizon: usize,
    /// Window of previous recommendations checked for repetition.
    pub window: usize,
    /// Shared-attribute count in the window that ends the session.
    pub quota: usize,
    /// Softmax temperature over standardized scores; zero means argmax.
    pub temperature: f64,
    /// Interest at or above which the appended history entry is a like.
    pub like_threshold: f64,
}

impl Default for SatisfactionConfig {
    fn default() -> Self {
        Self {
            horizon: 100,
            window: 1,
            quota: 1,
            temperature: 1.0,
            like_threshold: 0.5,
        }
    }
}

impl SatisfactionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("satisfaction horizon must be at least 1"));
        }
        if self.window == 0 || self.quota == 0 || self.quota > self.window {
            return Err(invalid(format!(
                "need 1 <= N_q <= N, got N = {}, N_q = {}",
                self.window, self.quota
            )));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(invalid(format!("temperature {} must be finite and non-negative", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub round: usize,
    pub item: ItemId,
    pub interest: f64,
    pub exited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionOutcome {
    pub user: UserId,
    pub cumulative_satisfaction: f64,
    pub interaction_length: usize,
    pub trace: Vec<Round>,
}

fn sample_softmax(scores: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
    let z: Vec<f64> = scores
        .iter()
        .map(|s| if sd > 0.0 { (s - mean) / sd } else { 0.0 })
        .collect();
    let argmax = || {
        z.iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > z[best] { i } else { best })
    };
    if temperature == 0.0 {
        return argmax();
    }
    let top = z[argmax()];
    let weights: Vec<f64> = z.iter().map(|v| ((v - top) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding left a sliver past the last bucket.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Runs one user's session until the exit rule fires or the horizon ends.
/// The random stream is `seed` with stream id `user + 1`.
pub fn simulate_satisfaction(
    policy: &dyn Policy,
    interests: &InterestMatrix,
    user: UserId,
    initial: &InteractionHistory,
    cfg: &SatisfactionConfig,
    seed: u64,
) -> Result<SatisfactionOutcome> {
    cfg.validate()?;
    if interests.n_items == 0 {
        return Err(Error::EmptyInput("interest matrix has no items".into()));
    }
    if user.index() >= interests.n_users {
        return Err(Error::UnknownUser(user.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(user.0) + 1);
    let mut history = initial.clone();
    let mut clock = history.last().map_or(0, |e| e.timestamp);
    let mut trace: Vec<Round> = Vec::with_capacity(cfg.horizon);
    let mut satisfaction = Vec::with_capacity(cfg.horizon);
    for round in 1..=cfg.horizon {
        let scores = policy.scores(user, &history)?;
        if scores.len() != interests.n_items {
            return Err(invalid(format!(
                "policy scored {} items, interest matrix has {}",
                scores.len(),
                interests.n_items
            )));
        }
        let item = ItemId(sample_softmax(&scores, cfg.temperature, &mut rng) as u32);
        let shared = trace
            .iter()
            .rev()
            .take(cfg.window)
            .filter(|r| interests.shares_attribute(r.item, item))
            .count();
        let interest = interests.interest(user, item);
        if shared >= cfg.quota {
            trace.push(Round { round, item, interest, exited: true });
            break;
        }
        trace.push(Round { round, item, interest, exited: false });
        satisfaction.push(interest);
        clock += 1;
        history.push(HistoryEntry::new(item, interest >= cfg.like_threshold, clock))?;
    }
    Ok(SatisfactionOutcome {
        user,
        cumulative_satisfaction: satisfaction.iter().sum(),
        interaction_length: trace.len(),
        trace,
    })
}

/// Writes one JSON object per round, tagged with policy and user.
pub fn write_trace_jsonl(policy: &str, outcomes: &[SatisfactionOutcome], mut w: impl Write) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        policy: &'a str,
        user: UserId,
        #[serde(flatten)]
        round: &'a Round,
    }
    for o in outcomes {
        for r in &o.trace {
            serde_json::to_writer(&mut w, &Line { policy, user: o.user, round: r })?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// End-to-end satisfaction comparison on a synthetic interest matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub interests: InterestConfig,
    pub session: SatisfactionConfig,
    /// Logged interactions per user used to train the base model; feedback
    /// is the interest threshold.
    pub observed_per_user: usize,
    pub hyper: Hyper,
    pub counterfactual: CounterfactualConfig,
    /// Start sessions from the logged history instead of an empty one.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            interests: InterestConfig::default(),
            session: SatisfactionConfig::default(),
            observed_per_user: 30,
            hyper: Hyper::default(),
            counterfactual: CounterfactualConfig::default(),
            warm_start: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub users: usize,
    pub mean_satisfaction: f64,
    pub mean_length: f64,
    pub exit_rate: f64,
}

impl PolicySummary {
    pub fn of(policy: &str, outcomes: &[SatisfactionOutcome]) -> Self {
        Self {
            policy: policy.to_string(),
            users: outcomes.len(),
            mean_satisfaction: compensated_mean(outcomes.iter().map(|o| o.cumulative_satisfaction)),
            mean_length: compensated_mean(outcomes.iter().map(|o| o.interaction_length as f64)),
            exit_rate: compensated_mean(
                outcomes
                    .iter()
                    .map(|o| f64::from(u8::from(o.trace.last().is_some_and(|r| r.exited)))),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionStudy {
    pub summaries: Vec<PolicySummary>,
    #[serde(skip)]
    pub outcomes: BTreeMap<String, Vec<SatisfactionOutcome>>,
}

impl SatisfactionStudy {
    pub fn summary(&self, policy: &str) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }
}

/// Logs `observed_per_user` uniformly chosen interactions per user, trains
/// the base model on them, then runs base and counterfactual sessions for
/// every user, from the logged history when `warm_start` is set and from an
/// empty history otherwise.
pub fn satisfaction_study(cfg: &StudyConfig, exec: Execution) -> Result<SatisfactionStudy> {
    cfg.session.validate()?;
    cfg.counterfactual.validate()?;
    let interests = synth_interest_matrix(&cfg.interests)?;
    if cfg.observed_per_user == 0 || cfg.observed_per_user > interests.n_items {
        return Err(invalid(format!(
            "observed_per_user = {} must lie in 1..={}",
            cfg.observed_per_user, interests.n_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sequences = BTreeMap::new();
    for u in 0..interests.n_users as u32 {
        let picks = rand::seq::index::sample(&mut rng, interests.n_items, cfg.observed_per_user);
        let seq: Vec<HistoryEntry> = picks
            .into_iter()
            .enumerate()
            .map(|(t, v)| {
                let item = ItemId(v as u32);
                HistoryEntry::new(item, interests.interest(UserId(u), item) >= cfg.session.like_threshold, t as i64)
            })
            .collect();
        sequences.insert(UserId(u), seq);
    }
    let data = TrainingData::new(interests.n_users, interests.n_items, sequences)?;
    let model = train(&data, &cfg.hyper)?.model;
    let initial: Vec<InteractionHistory> = data
        .sequences()
        .iter()
        .map(|(_, seq)| {
            let logged = if cfg.warm_start { seq.as_slice() } else { &[] };
            InteractionHistory::from_entries(cfg.hyper.history_cap, logged.iter().copied())
        })
        .collect::<Result<_>>()?;

    let base = BasePolicy { model: &model };
    let dccf = CounterfactualPolicy {
        model: &model,
        config: cfg.counterfactual.clone(),
    };
    let policies: [&dyn Policy; 2] = [&base, &dccf];
    let mut study = SatisfactionStudy {
        summaries: Vec::new(),
        outcomes: BTreeMap::new(),
    };
    for p in policies {
        let outcomes = try_map_indexed(interests.n_users, exec, |u| {
            simulate_satisfaction(p, &interests, UserId(u as u32), &initial[u], &cfg.session, cfg.seed)
        })?;
        study.summaries.push(PolicySummary::of(p.name(), &outcomes));
        study.outcomes.insert(p.name().to_string(), outcomes);
    }
    Ok(study)
}
