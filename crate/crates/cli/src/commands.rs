use std::collections::BTreeMap;

use echoloop::cf::{EmbeddingModel, InteractionHistory, ItemId, UserId};
use echoloop::data::{
    binarize, export_tsv, ingest, leave_one_out, phase_split, synth_dataset, write_tsv, LineError, PhaseStats,
    RatingRecord, Schema,
};
use echoloop::eval::{satisfaction_study, write_trace_jsonl};
use echoloop::experiment::{
    alpha_grid, prepare_records, report_from_prepared, run_experiment, sweep, prepare, Arm, ArmSpec,
    ExperimentConfig, PhaseTraining,
};
use echoloop::markov::{analyze, AnalysisOptions, BehaviorName, ChainSpec, GroupState};
use echoloop::Execution;
use serde::{Deserialize, Serialize};

use crate::args::{ExperimentArgs, IngestArgs, MarkovArgs, RecommendArgs, SplitArgs};
use crate::artifacts::Workspace;
use crate::error::CliResult;

const RATINGS: &str = "ratings.tsv";
const INGEST_STATS: &str = "ingest_stats.json";
const SPLIT: &str = "split.json";

fn phase_file(p: usize) -> String {
    format!("phase{p}.tsv")
}

fn model_file(p: usize) -> String {
    format!("model_phase{p}.json")
}

fn invalid(msg: impl Into<String>) -> echoloop::Error {
    echoloop::Error::InvalidParameter(msg.into())
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestStats {
    source: String,
    records: usize,
    users: usize,
    items: usize,
    malformed_lines: usize,
    /// First malformed lines, for inspection.
    errors: Vec<LineError>,
    /// Phase boundaries implied by the source, if any.
    boundaries: Option<[i64; 2]>,
}

pub fn ingest_cmd(ws: &mut Workspace, cfg: &mut ExperimentConfig, a: &IngestArgs) -> CliResult<()> {
    if let Some(seed) = a.seed {
        cfg.dataset.synth.seed = seed;
    }
    let (records, errors, source, boundaries) = ws.stage("ingest", |_| {
        if a.synth {
            let d = synth_dataset(&cfg.dataset.synth)?;
            return Ok((d.records, Vec::new(), "synthetic".to_string(), Some(d.boundaries)));
        }
        let input = a.input.as_ref().expect("clap requires --input without --synth");
        let mut schema = Schema::preset(&a.schema)?;
        if let Some(d) = &a.delimiter {
            schema.delimiter = d.replace("\\t", "\t");
        }
        let fraction = a.max_malformed.unwrap_or(cfg.dataset.max_malformed_fraction);
        let out = ingest(input, &schema, fraction)?;
        Ok((out.records, out.errors, input.display().to_string(), None))
    })?;
    let stats = IngestStats {
        source,
        records: records.len(),
        users: records.iter().map(|r| r.user).collect::<std::collections::BTreeSet<_>>().len(),
        items: records.iter().map(|r| r.item).collect::<std::collections::BTreeSet<_>>().len(),
        malformed_lines: errors.len(),
        errors: errors.into_iter().take(100).collect(),
        boundaries,
    };
    ws.stage("write", |ws| {
        export_tsv(&records, &ws.path(RATINGS))?;
        ws.record(RATINGS);
        ws.write_json(INGEST_STATS, &stats)
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitSummary {
    boundaries: [i64; 2],
    like_threshold: f64,
    dislike_threshold: f64,
    stats: Vec<PhaseStats>,
    leave_one_out: Vec<LooStats>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LooStats {
    phase: usize,
    eval_users: usize,
    train_only_users: usize,
}

fn read_tsv(path: &std::path::Path) -> CliResult<Vec<RatingRecord>> {
    Ok(ingest(path, &Schema::canonical(), 0.0)?.records)
}

pub fn split_cmd(ws: &mut Workspace, cfg: &mut ExperimentConfig, a: &SplitArgs) -> CliResult<()> {
    if let (Some(b1), Some(b2)) = (&a.b1, &a.b2) {
        cfg.boundaries = Some([b1.clone(), b2.clone()]);
    }
    if let Some(off) = a.utc_offset_minutes {
        cfg.utc_offset_minutes = off;
    }
    let ratings = ws.require(RATINGS, "ingest")?;
    let boundaries = if cfg.boundaries.is_some() {
        cfg.resolve_boundaries()?
    } else {
        let stats: Option<IngestStats> = std::fs::read_to_string(ws.path(INGEST_STATS))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        match stats.and_then(|s| s.boundaries) {
            Some(b) => b,
            None => {
                let mut file_cfg = cfg.clone();
                file_cfg.dataset.path = Some(ratings.clone());
                file_cfg.resolve_boundaries()?
            }
        }
    };
    let split = ws.stage("split", |_| {
        let records = binarize(&read_tsv(&ratings)?, cfg.like_threshold, cfg.dislike_threshold)?;
        Ok(phase_split(&records, boundaries)?)
    })?;
    ws.stage("write", |ws| {
        let mut loo = Vec::new();
        for (i, recs) in split.phases.iter().enumerate() {
            let mut buf = Vec::new();
            write_tsv(recs, &mut buf)?;
            ws.write(&phase_file(i + 1), &buf)?;
            let l = leave_one_out(recs)?;
            loo.push(LooStats { phase: i + 1, eval_users: l.test.len(), train_only_users: l.train_only.len() });
        }
        ws.write_json(
            SPLIT,
            &SplitSummary {
                boundaries,
                like_threshold: cfg.like_threshold,
                dislike_threshold: cfg.dislike_threshold,
                stats: split.stats.clone(),
                leave_one_out: loo,
            },
        )
    })
}

fn load_split(ws: &Workspace) -> CliResult<(SplitSummary, Vec<RatingRecord>)> {
    let summary: SplitSummary = serde_json::from_str(
        &std::fs::read_to_string(ws.require(SPLIT, "split")?).map_err(echoloop::Error::from)?,
    )
    .map_err(echoloop::Error::from)?;
    let mut records = Vec::new();
    for p in 1..=3 {
        records.extend(read_tsv(&ws.require(&phase_file(p), "split")?)?);
    }
    Ok((summary, records))
}

pub fn train_cmd(ws: &mut Workspace, cfg: &ExperimentConfig) -> CliResult<()> {
    let (summary, records) = ws.stage("load", |ws| load_split(ws))?;
    let prepared = ws.stage("train", |_| Ok(prepare_records(cfg, &records, summary.boundaries)?))?;
    ws.stage("write", |ws| {
        let mut report = Vec::new();
        for p in &prepared.phases {
            let name = model_file(p.phase);
            p.model.save(&ws.path(&name))?;
            ws.record(&name);
            report.push(PhaseTraining {
                phase: p.phase,
                users: p.histories.len(),
                eval_users: p.split.test.len(),
                train_only_users: p.split.train_only.len(),
                epoch_losses: p.epoch_losses.clone(),
            });
        }
        ws.write_json("train_report.json", &report)
    })
}

pub fn experiment_cmd(ws: &mut Workspace, cfg: &mut ExperimentConfig, a: &ExperimentArgs, exec: Execution) -> CliResult<()> {
    if let Some(arms) = &a.arms {
        cfg.arms = arms.split(',').map(Arm::parse).collect::<Result<_, _>>()?;
    }
    if a.no_satisfaction {
        cfg.run_satisfaction = false;
    }
    cfg.validate()?;
    let report = if a.sweep_alpha {
        let prepared = ws.stage("prepare", |_| Ok(prepare(cfg)?))?;
        let s = ws.stage("sweep", |_| Ok(sweep(&prepared, &alpha_grid(cfg.counterfactual.n), exec)?))?;
        ws.write_json("sweep.json", &s)?;
        ws.write("sweep.csv", s.csv().as_bytes())?;
        ws.stage("experiment", |_| Ok(report_from_prepared(&prepared, exec)?))?
    } else {
        ws.stage("experiment", |_| Ok(run_experiment(cfg, exec)?))?
    };
    ws.stage("write", |ws| {
        ws.write_json("report.json", &report)?;
        ws.write("comparison.csv", report.comparison_csv().as_bytes())?;
        ws.write("ranking.csv", report.ranking_csv().as_bytes())?;
        ws.write("diversity.csv", report.diversity_csv().as_bytes())
    })?;
    print!("{}", report.comparison_csv());
    Ok(())
}

fn parse_behavior(s: &str) -> CliResult<BehaviorName> {
    Ok(serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| invalid(format!("unknown behavior type {s:?}; expected type1, type2 or type3")))?)
}

pub fn markov_cmd(ws: &mut Workspace, cfg: &ExperimentConfig, a: &MarkovArgs, exec: Execution) -> CliResult<ChainSpec> {
    let mut spec: ChainSpec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    echoloop::Error::MissingArtifact(format!("chain spec {}", p.display()))
                } else {
                    echoloop::Error::from(e)
                }
            })?;
            serde_json::from_str(&text).map_err(echoloop::Error::from)?
        }
        None => cfg.markov.clone(),
    };
    if let Some(d) = a.d {
        spec.d = d;
    }
    if let Some(m) = a.m {
        spec.m = m;
    }
    if let Some(b) = &a.behavior {
        spec.behavior_type = parse_behavior(b)?;
    }
    if a.p.is_some() {
        spec.p = a.p;
    }
    let start = match &a.start {
        None => None,
        Some(s) => {
            let groups = s
                .split(',')
                .map(|g| g.trim().parse::<usize>().map_err(|_| invalid(format!("start group {g:?} is not an integer"))))
                .collect::<Result<Vec<_>, _>>()?;
            Some(GroupState::full(groups))
        }
    };
    let opts = AnalysisOptions {
        simulate_only: a.simulate,
        start,
        n_trajectories: a.trajectories,
        horizon: a.horizon,
        seed: a.seed,
        ..Default::default()
    };
    let report = ws.stage("analyze", |_| Ok(analyze(&spec, &opts, exec)?))?;
    ws.stage("write", |ws| {
        ws.write_json("markov_report.json", &report)?;
        if let Some(csv) = report.absorption_csv() {
            ws.write("absorption.csv", csv.as_bytes())?;
        }
        if let Some(csv) = report.limit_csv() {
            ws.write("limit.csv", csv.as_bytes())?;
        }
        Ok(())
    })?;
    println!("classification: {}", report.classification);
    Ok(spec)
}

pub fn satisfy_cmd(ws: &mut Workspace, cfg: &ExperimentConfig, exec: Execution) -> CliResult<()> {
    let study = ws.stage("simulate", |_| Ok(satisfaction_study(&cfg.satisfaction, exec)?))?;
    ws.stage("write", |ws| {
        ws.write_json("satisfaction.json", &study.summaries)?;
        let mut buf = Vec::new();
        for (policy, outcomes) in &study.outcomes {
            write_trace_jsonl(policy, outcomes, &mut buf)?;
        }
        ws.write("traces.jsonl", &buf)
    })?;
    for s in &study.summaries {
        println!(
            "{}: mean length {:.3}, mean satisfaction {:.4}",
            s.policy, s.mean_length, s.mean_satisfaction
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Recommendation {
    user: UserId,
    phase: usize,
    arm: String,
    items: Vec<ItemId>,
}

pub fn recommend_cmd(ws: &mut Workspace, cfg: &ExperimentConfig, a: &RecommendArgs) -> CliResult<()> {
    if !(1..=3).contains(&a.phase) {
        return Err(invalid(format!("phase {} outside 1..=3", a.phase)).into());
    }
    let arm = ArmSpec::of(Arm::parse(&a.arm)?, cfg);
    cfg.counterfactual.validate()?;
    let model = EmbeddingModel::load(&ws.require(&model_file(a.phase), "train")?)?;
    let records = read_tsv(&ws.require(&phase_file(a.phase), "split")?)?;
    let user = UserId(a.user);
    let mut mine: Vec<&RatingRecord> = records.iter().filter(|r| r.user == user).collect();
    mine.sort_by_key(|r| (r.timestamp, r.item));
    let history = InteractionHistory::from_entries(cfg.hyper.history_cap, mine.iter().map(|r| r.entry()))?;
    model.user_vec(user)?;
    let seen: std::collections::HashSet<ItemId> = mine.iter().map(|r| r.item).collect();
    let catalog: BTreeMap<ItemId, ()> = records.iter().map(|r| (r.item, ())).collect();
    let candidates: Vec<ItemId> = catalog.keys().copied().filter(|v| !seen.contains(v)).collect();
    let items = arm.rank(&model, user, &history, &candidates, cfg.eval.k)?;
    let out = Recommendation { user, phase: a.phase, arm: a.arm.clone(), items };
    let text = serde_json::to_string(&out).map_err(echoloop::Error::from)?;
    println!("{text}");
    Ok(())
}
