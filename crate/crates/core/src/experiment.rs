//! End-to-end phased experiment: data, per-phase models, and the base,
//! counterfactual and MMR arms compared on ranking quality and the change of
//! content diversity across phases.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{adjusted_scores, CounterfactualBundle, CounterfactualConfig};
use crate::cf::{
    group_items, rank_top_k, train, train_from, EmbeddingModel, Hyper, InteractionHistory, ItemId, Scorer, UserId,
};
use crate::data::{
    binarize, ingest, leave_one_out, parse_date, phase_split, synth_dataset, EvalSplit, PhaseStats, RatingRecord,
    Schema, SynthConfig,
};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    compensated_mean, diversity_change, mmr_rerank, rank_of_target, sample_negatives, satisfaction_study,
    DiversityReport, PhaseRecs, PolicySummary, RankingReport, StudyConfig,
};
use crate::exec::{try_map_indexed, Execution};
use crate::markov::ChainSpec;
use crate::REPORT_SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Base,
    Mmr,
    Dccf,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Base => "base",
            Arm::Mmr => "mmr",
            Arm::Dccf => "dccf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "base" => Ok(Arm::Base),
            "mmr" => Ok(Arm::Mmr),
            "dccf" => Ok(Arm::Dccf),
            other => Err(invalid(format!("unknown arm {other:?}; expected base, mmr or dccf"))),
        }
    }
}

/// Rating source: a delimited file when `path` is set, the synthetic
/// generator otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub schema: Schema,
    pub max_malformed_fraction: f64,
    pub synth: SynthConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            schema: Schema::movielens(),
            max_malformed_fraction: 0.01,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub n_negatives: usize,
    pub mmr_lambda: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            n_negatives: 100,
            mmr_lambda: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Two ISO dates or epoch timestamps. Synthetic data defaults to thirds
    /// of its horizon, files to the MovieLens-1m dates.
    pub boundaries: Option<[String; 2]>,
    pub utc_offset_minutes: i32,
    pub like_threshold: f64,
    pub dislike_threshold: f64,
    pub hyper: Hyper,
    pub counterfactual: CounterfactualConfig,
    pub eval: EvalConfig,
    pub arms: Vec<Arm>,
    pub run_satisfaction: bool,
    pub satisfaction: StudyConfig,
    pub markov: ChainSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            boundaries: None,
            utc_offset_minutes: 0,
            like_threshold: 4.0,
            dislike_threshold: 3.0,
            hyper: Hyper::default(),
            counterfactual: CounterfactualConfig::default(),
            eval: EvalConfig::default(),
            arms: vec![Arm::Base, Arm::Dccf],
            run_satisfaction: true,
            satisfaction: StudyConfig::default(),
            markov: ChainSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Checks every section before any stage runs.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.counterfactual.validate()?;
        if self.dataset.path.is_none() {
            self.dataset.synth.validate()?;
        }
        if !(self.like_threshold > self.dislike_threshold) {
            return Err(invalid(format!(
                "like threshold {} must exceed dislike threshold {}",
                self.like_threshold, self.dislike_threshold
            )));
        }
        if self.eval.k == 0 || self.eval.n_negatives == 0 {
            return Err(invalid("eval k and n_negatives must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.eval.mmr_lambda) {
            return Err(invalid(format!("MMR lambda {} outside [0, 1]", self.eval.mmr_lambda)));
        }
        if self.arms.is_empty() || !self.arms.contains(&Arm::Base) {
            return Err(invalid("arms must include base"));
        }
        let unique: HashSet<_> = self.arms.iter().collect();
        if unique.len() != self.arms.len() {
            return Err(invalid("arms listed more than once"));
        }
        if self.markov.d == 0 {
            return Err(invalid("markov.d must be at least 1"));
        }
        if self.run_satisfaction {
            self.satisfaction.session.validate()?;
        }
        self.resolve_boundaries().map(|_| ())
    }

    pub fn resolve_boundaries(&self) -> Result<[i64; 2]> {
        let b = match (&self.boundaries, &self.dataset.path) {
            (Some([a, b]), _) => [parse_date(a, self.utc_offset_minutes)?, parse_date(b, self.utc_offset_minutes)?],
            (None, None) => self.dataset.synth.boundaries(),
            (None, Some(_)) => [
                parse_date(crate::data::DEFAULT_BOUNDARIES[0], self.utc_offset_minutes)?,
                parse_date(crate::data::DEFAULT_BOUNDARIES[1], self.utc_offset_minutes)?,
            ],
        };
        if b[0] >= b[1] {
            return Err(invalid(format!("phase boundaries must be strictly increasing, got {} >= {}", b[0], b[1])));
        }
        Ok(b)
    }

    /// Binarized records of the configured source.
    pub fn load_records(&self) -> Result<Vec<RatingRecord>> {
        let raw = match &self.dataset.path {
            Some(p) => ingest(p, &self.dataset.schema, self.dataset.max_malformed_fraction)?.records,
            None => synth_dataset(&self.dataset.synth)?.records,
        };
        if raw.is_empty() {
            return Err(Error::EmptyInput("dataset has no records".into()));
        }
        binarize(&raw, self.like_threshold, self.dislike_threshold)
    }
}

/// Everything the arms share for one phase.
#[derive(Debug, Clone)]
pub struct PhaseData {
    pub phase: usize,
    pub split: EvalSplit,
    pub model: EmbeddingModel,
    pub epoch_losses: Vec<f64>,
    /// Most recent `history_cap` interactions of each user in the phase.
    pub histories: BTreeMap<UserId, InteractionHistory>,
    pub seen: BTreeMap<UserId, HashSet<ItemId>>,
    pub liked: BTreeMap<UserId, HashSet<ItemId>>,
}

/// Trained phase models and derived inputs, reusable across arms and sweeps.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub n_users: usize,
    pub n_items: usize,
    pub catalog: Vec<ItemId>,
    pub boundaries: [i64; 2],
    pub stats: Vec<PhaseStats>,
    pub phases: Vec<PhaseData>,
}

/// Loads and splits the data, then trains phase 1 from scratch and each
/// later phase warm-started from the previous model.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let records = cfg.load_records()?;
    prepare_records(cfg, &records, cfg.resolve_boundaries()?)
}

/// [`prepare`] over already binarized records and explicit boundaries.
pub fn prepare_records(cfg: &ExperimentConfig, records: &[RatingRecord], boundaries: [i64; 2]) -> Result<Prepared> {
    cfg.hyper.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to train on".into()));
    }
    let n_users = records.iter().map(|r| r.user.index()).max().unwrap_or(0) + 1;
    let n_items = records.iter().map(|r| r.item.index()).max().unwrap_or(0) + 1;
    let catalog: Vec<ItemId> = records
        .iter()
        .map(|r| r.item)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let split = phase_split(records, boundaries)?;
    let mut phases = Vec::with_capacity(3);
    let mut previous: Option<EmbeddingModel> = None;
    for (i, recs) in split.phases.iter().enumerate() {
        let phase = i + 1;
        if recs.is_empty() {
            return Err(Error::EmptyInput(format!("phase {phase} has no records")));
        }
        let eval_split = leave_one_out(recs)?;
        let data = eval_split.training_data(n_users, n_items, false)?;
        let outcome = match previous.take() {
            None => train(&data, &cfg.hyper)?,
            Some(m) => train_from(m, &data, &cfg.hyper)?,
        };
        log::info!("phase {phase}: trained on {} interactions", data.n_interactions());
        let mut by_user: BTreeMap<UserId, Vec<&RatingRecord>> = BTreeMap::new();
        for r in recs {
            by_user.entry(r.user).or_default().push(r);
        }
        let mut histories = BTreeMap::new();
        let mut seen = BTreeMap::new();
        let mut liked = BTreeMap::new();
        for (u, mut rs) in by_user {
            rs.sort_by_key(|r| (r.timestamp, r.item));
            histories.insert(
                u,
                InteractionHistory::from_entries(cfg.hyper.history_cap, rs.iter().map(|r| r.entry()))?,
            );
            seen.insert(u, rs.iter().map(|r| r.item).collect());
            liked.insert(u, rs.iter().filter(|r| r.liked()).map(|r| r.item).collect());
        }
        previous = Some(outcome.model.clone());
        phases.push(PhaseData {
            phase,
            split: eval_split,
            model: outcome.model,
            epoch_losses: outcome.epoch_losses,
            histories,
            seen,
            liked,
        });
    }
    Ok(Prepared {
        config: cfg.clone(),
        n_users,
        n_items,
        catalog,
        boundaries,
        stats: split.stats,
        phases,
    })
}

/// How an arm orders candidates.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmSpec {
    Base,
    Mmr { lambda: f64 },
    Dccf(CounterfactualConfig),
}

impl ArmSpec {
    pub fn of(arm: Arm, cfg: &ExperimentConfig) -> Self {
        match arm {
            Arm::Base => ArmSpec::Base,
            Arm::Mmr => ArmSpec::Mmr { lambda: cfg.eval.mmr_lambda },
            Arm::Dccf => ArmSpec::Dccf(cfg.counterfactual.clone()),
        }
    }

    fn scores(&self, model: &EmbeddingModel, user: UserId, h: &InteractionHistory, items: &[ItemId]) -> Result<Vec<f64>> {
        match self {
            ArmSpec::Dccf(cf) if cf.n > 0 && !h.is_empty() => {
                let bundle = CounterfactualBundle::build(model, h, cf)?;
                adjusted_scores(model, user, items, &bundle)
            }
            _ => model.score_items(user, h, items),
        }
    }

    /// The top `k` of `candidates`, best first.
    pub fn rank(
        &self,
        model: &EmbeddingModel,
        user: UserId,
        h: &InteractionHistory,
        candidates: &[ItemId],
        k: usize,
    ) -> Result<Vec<ItemId>> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.scores(model, user, h, candidates)?;
        let scored: Vec<(ItemId, f64)> = candidates.iter().copied().zip(scores).collect();
        let ranked = match self {
            ArmSpec::Mmr { lambda } => mmr_rerank(&scored, model, *lambda, k.min(scored.len()))?,
            _ => rank_top_k(scored, k),
        };
        Ok(ranked.into_iter().map(|(v, _)| v).collect())
    }

    /// 1-based rank of `target` among itself and `negatives`.
    fn target_rank(
        &self,
        model: &EmbeddingModel,
        user: UserId,
        h: &InteractionHistory,
        target: ItemId,
        negatives: &[ItemId],
    ) -> Result<usize> {
        let mut items = Vec::with_capacity(negatives.len() + 1);
        items.push(target);
        items.extend_from_slice(negatives);
        match self {
            ArmSpec::Mmr { .. } => {
                let order = self.rank(model, user, h, &items, items.len())?;
                Ok(order.iter().position(|&v| v == target).expect("target ranked") + 1)
            }
            _ => {
                let scores = self.scores(model, user, h, &items)?;
                let negs: Vec<(ItemId, f64)> = negatives.iter().copied().zip(scores[1..].iter().copied()).collect();
                Ok(rank_of_target((target, scores[0]), &negs))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub phase: usize,
    pub arm: String,
    pub split: String,
    pub report: RankingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDiversity {
    pub arm: String,
    /// Phase 1 is the shared base list; later phases are the arm's own.
    pub per_phase: BTreeMap<usize, f64>,
    pub delta_12: f64,
    pub delta_13: f64,
    pub report: DiversityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAgreement {
    pub phase: usize,
    pub arm: String,
    /// Share of recommended items in the group of the user's most recent
    /// liked item.
    pub rate: f64,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub arm: String,
    pub phase2: [f64; 4],
    pub phase3: [f64; 4],
    pub delta_12: f64,
    pub delta_13: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTraining {
    pub phase: usize,
    pub users: usize,
    pub eval_users: usize,
    pub train_only_users: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub boundaries: [i64; 2],
    pub n_users: usize,
    pub n_items: usize,
    pub phases: Vec<PhaseStats>,
    pub training: Vec<PhaseTraining>,
    pub ranking: Vec<RankingEntry>,
    pub diversity: Vec<ArmDiversity>,
    pub group_agreement: Vec<GroupAgreement>,
    pub comparison: Vec<ComparisonRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satisfaction: Option<Vec<PolicySummary>>,
}

impl ExperimentReport {
    pub fn ranking(&self, phase: usize, arm: &str, split: &str) -> Option<&RankingReport> {
        self.ranking
            .iter()
            .find(|e| e.phase == phase && e.arm == arm && e.split == split)
            .map(|e| &e.report)
    }

    pub fn arm_diversity(&self, arm: &str) -> Option<&ArmDiversity> {
        self.diversity.iter().find(|d| d.arm == arm)
    }

    /// The table with Phase 2 and 3 ranking metrics and both deltas.
    pub fn comparison_csv(&self) -> String {
        let mut s = String::from(
            "arm,p2_ndcg10,p2_hit10,p2_u_ndcg10,p2_u_hit10,p3_ndcg10,p3_hit10,p3_u_ndcg10,p3_u_hit10,delta_12,delta_13\n",
        );
        for r in &self.comparison {
            let _ = write!(s, "{}", r.arm);
            for v in r.phase2.iter().chain(&r.phase3).chain([&r.delta_12, &r.delta_13]) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn ranking_csv(&self) -> String {
        let mut s = String::from("phase,arm,split,users,k,n_negatives,catalog_size,ndcg,hit,u_ndcg,u_hit\n");
        for e in &self.ranking {
            let r = &e.report;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.phase, e.arm, e.split, r.users, r.k, r.n_negatives, r.catalog_size, r.ndcg_at_k, r.hit_at_k,
                r.u_ndcg_at_k, r.u_hit_at_k
            );
        }
        s
    }

    pub fn diversity_csv(&self) -> String {
        let mut s = String::from("arm,phase1,phase2,phase3,delta_12,delta_13\n");
        for d in &self.diversity {
            let p = |i| d.per_phase.get(&i).copied().unwrap_or(f64::NAN);
            let _ = writeln!(s, "{},{},{},{},{},{}", d.arm, p(1), p(2), p(3), d.delta_12, d.delta_13);
        }
        s
    }
}

/// Top-`k` lists for every user of the phase, excluding the user's own
/// phase interactions.
pub fn phase_recommendations(
    prepared: &Prepared,
    phase: &PhaseData,
    arm: &ArmSpec,
    exec: Execution,
) -> Result<BTreeMap<UserId, Vec<ItemId>>> {
    let users: Vec<UserId> = phase.histories.keys().copied().collect();
    let k = prepared.config.eval.k;
    let lists = try_map_indexed(users.len(), exec, |i| {
        let u = users[i];
        let seen = &phase.seen[&u];
        let candidates: Vec<ItemId> = prepared.catalog.iter().copied().filter(|v| !seen.contains(v)).collect();
        arm.rank(&phase.model, u, &phase.histories[&u], &candidates, k)
    })?;
    Ok(users.into_iter().zip(lists).collect())
}

/// Ranking metrics on the validation or test targets of one phase.
pub fn phase_ranking(prepared: &Prepared, phase: &PhaseData, arm: &ArmSpec, test: bool, exec: Execution) -> Result<RankingReport> {
    let ev = &prepared.config.eval;
    let cap = prepared.config.hyper.history_cap;
    let targets = if test { &phase.split.test } else { &phase.split.validation };
    let users: Vec<UserId> = targets.keys().copied().collect();
    let salt = (phase.phase as u64) << 1 | u64::from(test);
    let ranks = try_map_indexed(users.len(), exec, |i| {
        let u = users[i];
        let target = &targets[&u];
        let h = phase.split.history_before(u, target, cap)?;
        let mut rng = ChaCha8Rng::seed_from_u64(ev.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(u64::from(u.0));
        let mut exclude: HashSet<ItemId> = phase.liked[&u].clone();
        exclude.insert(target.item);
        let negatives: Vec<ItemId> = sample_negatives(&mut rng, prepared.n_items, &exclude, ev.n_negatives * 4)
            .into_iter()
            .filter(|v| prepared.catalog.binary_search(v).is_ok())
            .take(ev.n_negatives)
            .collect();
        if negatives.len() < ev.n_negatives {
            return Err(invalid(format!(
                "user {u} has only {} eligible negatives, {} requested",
                negatives.len(),
                ev.n_negatives
            )));
        }
        arm.target_rank(&phase.model, u, &h, target.item, &negatives)
    })?;
    RankingReport::from_ranks(&ranks, ev.k, ev.n_negatives, prepared.catalog.len())
}

fn group_agreement(
    prepared: &Prepared,
    phase: &PhaseData,
    recs: &BTreeMap<UserId, Vec<ItemId>>,
    exec: Execution,
) -> Result<(f64, usize)> {
    let d = prepared.config.markov.d.min(prepared.n_items);
    let grouping = group_items(&phase.model, d, prepared.config.hyper.seed, exec)?;
    let mut rates = Vec::new();
    for (u, list) in recs {
        let last_liked = phase.histories[u].entries().filter(|e| e.liked).last().map(|e| e.item);
        let (Some(anchor), false) = (last_liked, list.is_empty()) else { continue };
        let g = grouping.group_of(anchor);
        let same = list.iter().filter(|&&v| grouping.group_of(v) == g).count();
        rates.push(same as f64 / list.len() as f64);
    }
    Ok((compensated_mean(rates.iter().copied()), rates.len()))
}

/// Arm evaluation over prepared phase models.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub name: String,
    pub ranking: Vec<RankingEntry>,
    pub diversity: ArmDiversity,
    pub group_agreement: Vec<GroupAgreement>,
}

pub fn evaluate_arm(
    prepared: &Prepared,
    name: &str,
    arm: &ArmSpec,
    base_phase1: &BTreeMap<UserId, Vec<ItemId>>,
    exec: Execution,
) -> Result<ArmResult> {
    let mut ranking = Vec::new();
    let mut agreement = Vec::new();
    let mut recs_by_phase = Vec::new();
    for phase in &prepared.phases {
        for test in [false, true] {
            ranking.push(RankingEntry {
                phase: phase.phase,
                arm: name.to_string(),
                split: if test { "test" } else { "validation" }.to_string(),
                report: phase_ranking(prepared, phase, arm, test, exec)?,
            });
        }
        let recs = if phase.phase == 1 {
            base_phase1.clone()
        } else {
            phase_recommendations(prepared, phase, arm, exec)?
        };
        let (rate, users) = group_agreement(prepared, phase, &recs, exec)?;
        agreement.push(GroupAgreement { phase: phase.phase, arm: name.to_string(), rate, users });
        recs_by_phase.push(recs);
    }
    let inputs: Vec<PhaseRecs<'_>> = prepared
        .phases
        .iter()
        .zip(&recs_by_phase)
        .map(|(p, r)| PhaseRecs { phase: p.phase, model: &p.model, recs: r })
        .collect();
    let report = diversity_change(&inputs)?;
    let delta = |j| report.delta(1, j).ok_or_else(|| invalid(format!("phase {j} missing from diversity report")));
    let diversity = ArmDiversity {
        arm: name.to_string(),
        per_phase: report.per_phase_diversity.clone(),
        delta_12: delta(2)?,
        delta_13: delta(3)?,
        report,
    };
    Ok(ArmResult { name: name.to_string(), ranking, diversity, group_agreement: agreement })
}

fn metrics(r: &RankingReport) -> [f64; 4] {
    [r.ndcg_at_k, r.hit_at_k, r.u_ndcg_at_k, r.u_hit_at_k]
}

/// Runs every configured arm and, if enabled, the satisfaction study.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentReport> {
    let prepared = prepare(cfg)?;
    report_from_prepared(&prepared, exec)
}

pub fn report_from_prepared(prepared: &Prepared, exec: Execution) -> Result<ExperimentReport> {
    let cfg = &prepared.config;
    let base_phase1 = phase_recommendations(prepared, &prepared.phases[0], &ArmSpec::Base, exec)?;
    let mut arms: Vec<Arm> = cfg.arms.clone();
    arms.sort();
    let mut report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        boundaries: prepared.boundaries,
        n_users: prepared.n_users,
        n_items: prepared.n_items,
        phases: prepared.stats.clone(),
        training: prepared
            .phases
            .iter()
            .map(|p| PhaseTraining {
                phase: p.phase,
                users: p.histories.len(),
                eval_users: p.split.test.len(),
                train_only_users: p.split.train_only.len(),
                epoch_losses: p.epoch_losses.clone(),
            })
            .collect(),
        ranking: Vec::new(),
        diversity: Vec::new(),
        group_agreement: Vec::new(),
        comparison: Vec::new(),
        satisfaction: None,
    };
    for arm in arms {
        let r = evaluate_arm(prepared, arm.name(), &ArmSpec::of(arm, cfg), &base_phase1, exec)?;
        let find = |phase| {
            r.ranking
                .iter()
                .find(|e| e.phase == phase && e.split == "test")
                .map(|e| metrics(&e.report))
                .unwrap_or([f64::NAN; 4])
        };
        report.comparison.push(ComparisonRow {
            arm: r.name.clone(),
            phase2: find(2),
            phase3: find(3),
            delta_12: r.diversity.delta_12,
            delta_13: r.diversity.delta_13,
        });
        report.ranking.extend(r.ranking);
        report.group_agreement.extend(r.group_agreement);
        report.diversity.push(r.diversity);
    }
    if cfg.run_satisfaction {
        report.satisfaction = Some(satisfaction_study(&cfg.satisfaction, exec)?.summaries);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub alpha: f64,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_12: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase2_ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub base_delta_12: f64,
    pub base_phase2_ndcg: f64,
    pub points: Vec<SweepPoint>,
}

impl Sweep {
    pub fn csv(&self) -> String {
        let mut s = String::from("n,alpha,feasible,delta_12,phase2_ndcg10,base_delta_12,base_phase2_ndcg10\n");
        for p in &self.points {
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                p.n,
                p.alpha,
                p.feasible,
                opt(p.delta_12),
                opt(p.phase2_ndcg),
                self.base_delta_12,
                self.base_phase2_ndcg
            );
        }
        s
    }
}

/// Evaluates the counterfactual arm at each `(n, alpha)` on the same
/// trained models. Infeasible weight pairs are recorded, not run.
pub fn sweep(prepared: &Prepared, grid: &[(usize, f64)], exec: Execution) -> Result<Sweep> {
    let base_phase1 = phase_recommendations(prepared, &prepared.phases[0], &ArmSpec::Base, exec)?;
    let p2 = prepared
        .phases
        .get(1)
        .ok_or_else(|| invalid("sweep needs at least two phases"))?;
    let base = evaluate_arm(prepared, "base", &ArmSpec::Base, &base_phase1, exec)?;
    let base_ndcg = phase_ranking(prepared, p2, &ArmSpec::Base, true, exec)?.ndcg_at_k;
    let mut points = Vec::with_capacity(grid.len());
    for &(n, alpha) in grid {
        let cf = CounterfactualConfig { n, alpha, ..prepared.config.counterfactual.clone() };
        if cf.validate().is_err() {
            points.push(SweepPoint { n, alpha, feasible: false, delta_12: None, phase2_ndcg: None });
            continue;
        }
        let arm = ArmSpec::Dccf(cf);
        let recs = phase_recommendations(prepared, p2, &arm, exec)?;
        let report = diversity_change(&[
            PhaseRecs { phase: 1, model: &prepared.phases[0].model, recs: &base_phase1 },
            PhaseRecs { phase: 2, model: &p2.model, recs: &recs },
        ])?;
        let ndcg = phase_ranking(prepared, p2, &arm, true, exec)?.ndcg_at_k;
        points.push(SweepPoint {
            n,
            alpha,
            feasible: true,
            delta_12: report.delta(1, 2),
            phase2_ndcg: Some(ndcg),
        });
    }
    Ok(Sweep {
        base_delta_12: base.diversity.delta_12,
        base_phase2_ndcg: base_ndcg,
        points,
    })
}

/// `alpha` in 0.1 steps from 0.1 to 0.9 at fixed `n`.
pub fn alpha_grid(n: usize) -> Vec<(usize, f64)> {
    (1..=9).map(|i| (n, f64::from(i) / 10.0)).collect()
}
