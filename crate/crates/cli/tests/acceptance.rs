//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use echoloop::causal::{adjusted_scores, assign_weights, least_similar_items, CounterfactualBundle, CounterfactualConfig};
use echoloop::cf::{EmbeddingModel, Hyper, ItemId, Scorer};
use echoloop::eval::{content_diversity, corrected_rank, ranking_metrics, satisfaction_study, StudyConfig};
use echoloop::experiment::{
    alpha_grid, phase_recommendations, prepare, report_from_prepared, sweep, Arm, ArmSpec, ExperimentConfig,
};
use echoloop::markov::{
    analyze, build_type1, build_type2, build_type3, k_step, AnalysisOptions, ChainSpec, GroupState, RecGroupDist,
};
use echoloop::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn within_time(t: Instant, limit: Duration) -> Result<Duration, String> {
    let e = t.elapsed();
    check(e < limit, format!("took {e:.2?}, limit {limit:?}"))?;
    Ok(e)
}

fn max_abs(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn c1_markov_exactness() -> Outcome {
    let t = Instant::now();
    let opts = AnalysisOptions {
        start: Some(GroupState::full(vec![0, 1])),
        n_trajectories: 100_000,
        seed: 0,
        ..Default::default()
    };
    let r = analyze(&ChainSpec { d: 2, m: 2, ..Default::default() }, &opts, Execution::Parallel).map_err(|e| e.to_string())?;
    let abs = r.absorption.ok_or("no absorption report")?;
    let row = abs.transient_states.iter().position(|s| s == "0,1").ok_or("state (a,b) missing")?;
    check(abs.absorbing_states == ["0,0", "1,1"], format!("absorbing states {:?}", abs.absorbing_states))?;
    let (aa, bb) = (abs.matrix[row][0], abs.matrix[row][1]);
    check((aa - 1.0 / 3.0).abs() <= 1e-9 && (bb - 2.0 / 3.0).abs() <= 1e-9, format!("B row ({aa}, {bb})"))?;
    let mc = r.monte_carlo.ok_or("no Monte-Carlo check")?;
    let diff = mc.max_abs_diff.ok_or("no Monte-Carlo comparison")?;
    check(diff <= 0.01, format!("Monte-Carlo deviation {diff}"))?;
    let e = within_time(t, Duration::from_secs(5))?;
    Ok(format!("B(a,b) = ({aa:.12}, {bb:.12}), MC max diff {diff:.4} over 1e5 trajectories, {e:.2?}"))
}

fn c2_type2_uniform_limit() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for d in [2, 3] {
        for m in [2, 3] {
            let model = build_type2(d, m, &vec![1.0 / d as f64; d]).map_err(|e| e.to_string())?;
            let pm = k_step(&model, m as u64);
            let target = 1.0 / (d.pow(m as u32)) as f64;
            let dev = pm.iter().map(|x| (x - target).abs()).fold(0.0, f64::max);
            check(dev <= 1e-12, format!("d={d} m={m}: max deviation {dev:e}"))?;
            worst = worst.max(dev);
        }
    }
    let e = within_time(t, Duration::from_secs(1))?;
    Ok(format!("max |P^m - 1/d^m| = {worst:e}, {e:.2?}"))
}

fn c3_type3_irreducibility() -> Outcome {
    let (d, m) = (3, 2);
    let free = vec![1.0 / 3.0; 3];
    let rec = RecGroupDist::HistoryFrequency;
    let mut min_entry = f64::INFINITY;
    for p in [0.1, 0.5, 0.9] {
        let model = build_type3(d, m, rec.clone(), &free, p).map_err(|e| e.to_string())?;
        let pm = k_step(&model, m as u64);
        let lo = pm.min();
        check(lo > 0.0, format!("p={p}: P^m has entry {lo}"))?;
        min_entry = min_entry.min(lo);
    }
    let t1 = build_type1(d, m, rec.clone()).map_err(|e| e.to_string())?.to_dense();
    let t2 = build_type2(d, m, &free).map_err(|e| e.to_string())?.to_dense();
    let eps = 1e-14;
    let hi = build_type3(d, m, rec.clone(), &free, 1.0 - eps).map_err(|e| e.to_string())?.to_dense();
    let lo = build_type3(d, m, rec, &free, eps).map_err(|e| e.to_string())?.to_dense();
    let (d1, d2) = (max_abs(&hi, &t1), max_abs(&lo, &t2));
    check(d1 <= 1e-12 && d2 <= 1e-12, format!("limit gaps p->1 {d1:e}, p->0 {d2:e}"))?;
    Ok(format!("min P^m entry {min_entry:.4}; p->1 gap {d1:e}, p->0 gap {d2:e}"))
}

fn c4_reduction() -> Outcome {
    let mut cfg = ExperimentConfig { arms: vec![Arm::Base, Arm::Dccf], run_satisfaction: false, ..Default::default() };
    cfg.counterfactual = CounterfactualConfig { n: 0, alpha: 1.0, ..Default::default() };
    let prepared = prepare(&cfg).map_err(|e| e.to_string())?;
    let exec = Execution::Parallel;
    let mut scored = 0;
    for phase in &prepared.phases {
        for (&user, history) in phase.histories.iter().take(25) {
            let items: Vec<ItemId> = prepared.catalog.clone();
            let bundle = CounterfactualBundle::build(&phase.model, history, &cfg.counterfactual).map_err(|e| e.to_string())?;
            let adj = adjusted_scores(&phase.model, user, &items, &bundle).map_err(|e| e.to_string())?;
            let base = phase.model.score_items(user, history, &items).map_err(|e| e.to_string())?;
            check(
                adj.iter().map(|x| x.to_bits()).eq(base.iter().map(|x| x.to_bits())),
                format!("phase {} user {user}: adjusted scores differ", phase.phase),
            )?;
            scored += items.len();
        }
        let b = phase_recommendations(&prepared, phase, &ArmSpec::Base, exec).map_err(|e| e.to_string())?;
        let c = phase_recommendations(&prepared, phase, &ArmSpec::Dccf(cfg.counterfactual.clone()), exec)
            .map_err(|e| e.to_string())?;
        check(b == c, format!("phase {} rankings differ", phase.phase))?;
    }
    let report = report_from_prepared(&prepared, exec).map_err(|e| e.to_string())?;
    let strip = |arm: &str| -> Result<String, String> {
        let mut v = serde_json::json!({
            "ranking": report.ranking.iter().filter(|r| r.arm == arm).map(|r| (r.phase, &r.split, &r.report)).collect::<Vec<_>>(),
            "diversity": report.arm_diversity(arm).map(|d| (&d.per_phase, d.delta_12, d.delta_13, &d.report)),
            "agreement": report.group_agreement.iter().filter(|g| g.arm == arm).map(|g| (g.phase, g.rate, g.users)).collect::<Vec<_>>(),
            "comparison": report.comparison.iter().find(|c| c.arm == arm).map(|c| (c.phase2, c.phase3, c.delta_12, c.delta_13)),
        });
        v["arm"] = serde_json::Value::Null;
        serde_json::to_string(&v).map_err(|e| e.to_string())
    };
    check(strip("base")? == strip("dccf")?, "report sections differ between arms")?;
    Ok(format!("{scored} adjusted scores, 3 phases of rankings and all report sections bit-identical"))
}

fn c5_weight_law() -> Outcome {
    let w = assign_weights(9, 0.3).map_err(|e| e.to_string())?;
    let beta = 0.7 / 9.0;
    check((w.beta - beta).abs() <= 1e-12, format!("beta {}", w.beta))?;
    check(assign_weights(2, 0.3).is_err(), "(n=2, alpha=0.3) accepted")?;
    Ok(format!("beta = {:.15}; (2, 0.3) rejected", w.beta))
}

fn c6_counterfactual_argmin() -> Outcome {
    for seed in 0..100u64 {
        let n_items = 2 + (seed as usize * 37) % 49;
        let hyper = Hyper { embedding_dim: 8, seed, init_std: 1.0, ..Default::default() };
        let model = EmbeddingModel::init(1, n_items, &hyper).map_err(|e| e.to_string())?;
        let v_star = ItemId((seed % n_items as u64) as u32);
        let candidates: Vec<ItemId> = model.items().filter(|&v| v != v_star).collect();
        let got = least_similar_items(&model, v_star, 1, &candidates).map_err(|e| e.to_string())?[0];
        let mut best = candidates[0];
        for &v in &candidates {
            let (s, sb) = (model.similarity(v, v_star).unwrap(), model.similarity(best, v_star).unwrap());
            if s < sb || (s == sb && v < best) {
                best = v;
            }
        }
        check(got == best, format!("seed {seed}: got {got}, exhaustive argmin {best}"))?;
    }
    Ok("100/100 models agree with exhaustive search".into())
}

fn c7_diversity() -> Outcome {
    let d = content_diversity(&[&[0.0, 0.0], &[3.0, 4.0]]).map_err(|e| e.to_string())?;
    check((d - 5.0).abs() <= 1e-9, format!("diversity {d}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let n = rng.random_range(2..15);
        let dim = rng.random_range(1..8);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let shift: Vec<f64> = (0..dim).map(|_| rng.random_range(-100.0..100.0)).collect();
        let mut perm = pts.clone();
        perm.reverse();
        perm.rotate_left(n / 2);
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(x, s)| x + s).collect()).collect();
        let div = |v: &[Vec<f64>]| content_diversity(&v.iter().map(Vec::as_slice).collect::<Vec<_>>()).unwrap();
        let (a, b, c) = (div(&pts), div(&perm), div(&moved));
        let tol = 1e-9 * a.max(1.0);
        check((a - b).abs() <= tol && (a - c).abs() <= tol, format!("instance {i}: {a} vs {b} vs {c}"))?;
    }
    Ok(format!("{{(0,0),(3,4)}} -> {d}; 100 permutation/translation instances invariant"))
}

fn c8_ranking_metrics() -> Outcome {
    let expect = [(1, 1.0, 1.0), (3, 1.0, 0.5), (11, 0.0, 0.0)];
    for (rank, hit, ndcg) in expect {
        let m = ranking_metrics(rank, 10, 100, 3706).map_err(|e| e.to_string())?;
        check(m.hit == hit && m.ndcg == ndcg, format!("rank {rank}: hit {} ndcg {}", m.hit, m.ndcg))?;
    }
    let mut prev = f64::NEG_INFINITY;
    for rank in 1..=101 {
        let r = corrected_rank(rank, 100, 3706);
        check(r > prev, format!("corrected rank not increasing at {rank}"))?;
        prev = r;
    }
    Ok("ranks 1, 3, 11 at k=10 give hit (1, 1, 0), nDCG (1, 0.5, 0); corrected rank increasing".into())
}

fn seeded_experiment(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { run_satisfaction: false, ..Default::default() };
    cfg.dataset.synth.seed = seed;
    cfg.hyper.seed = seed;
    cfg.eval.seed = seed;
    cfg
}

fn c9_echo_chamber() -> Outcome {
    let t = Instant::now();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let r = echoloop::experiment::run_experiment(&seeded_experiment(seed), Execution::Parallel).map_err(|e| e.to_string())?;
        let (b, d) = (&r.comparison[0], &r.comparison[1]);
        let rel = (d.phase2[0] - b.phase2[0]).abs() / b.phase2[0];
        let ok = d.delta_12 < b.delta_12 && rel <= 0.10;
        wins += usize::from(ok);
        lines.push(format!("s{seed} {:+.4}/{:.1}%{}", d.delta_12 - b.delta_12, 100.0 * rel, if ok { "" } else { " miss" }));
    }
    check(wins >= 4, format!("{wins}/5 seeds [{}]", lines.join(" ")))?;
    let e = within_time(t, Duration::from_secs(600))?;
    Ok(format!("{wins}/5 seeds (Delta12 dccf-base / nDCG gap: {}), {e:.1?}", lines.join(" ")))
}

fn c10_satisfaction() -> Outcome {
    let t = Instant::now();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let mut cfg = StudyConfig { seed, ..Default::default() };
        cfg.interests.seed = seed;
        cfg.hyper.seed = seed;
        let s = satisfaction_study(&cfg, Execution::Parallel).map_err(|e| e.to_string())?;
        let get = |name: &str| s.summaries.iter().find(|p| p.policy == name).map(|p| p.mean_length);
        let (b, d) = (get("base").ok_or("no base policy")?, get("dccf").ok_or("no dccf policy")?);
        wins += usize::from(d > b);
        lines.push(format!("s{seed}:{b:.2}->{d:.2}"));
    }
    check(wins >= 4, format!("{wins}/5 seeds [{}]", lines.join(" ")))?;
    let e = within_time(t, Duration::from_secs(300))?;
    Ok(format!("{wins}/5 seeds (mean length base->dccf: {}), {e:.1?}", lines.join(" ")))
}

fn c11_sweep() -> Outcome {
    let cfg = seeded_experiment(0);
    let prepared = prepare(&cfg).map_err(|e| e.to_string())?;
    let s = sweep(&prepared, &alpha_grid(cfg.counterfactual.n), Execution::Parallel).map_err(|e| e.to_string())?;
    let top = s.points.iter().find(|p| (p.alpha - 0.9).abs() < 1e-12).ok_or("no alpha = 0.9 point")?;
    let (d12, ndcg) = (top.delta_12.ok_or("alpha 0.9 infeasible")?, top.phase2_ndcg.ok_or("alpha 0.9 infeasible")?);
    let rel_d = (d12 - s.base_delta_12).abs() / s.base_delta_12.abs();
    let rel_n = (ndcg - s.base_phase2_ndcg).abs() / s.base_phase2_ndcg.abs();
    check(rel_d <= 0.05 && rel_n <= 0.05, format!("alpha 0.9: Delta12 off by {:.2}%, nDCG by {:.2}%", 100.0 * rel_d, 100.0 * rel_n))?;
    let feasible = s.points.iter().filter(|p| p.feasible).count();
    Ok(format!(
        "alpha 0.9 within {:.2}% (Delta12) and {:.2}% (nDCG@10) of base; {feasible}/9 grid points feasible at n={}",
        100.0 * rel_d,
        100.0 * rel_n,
        cfg.counterfactual.n
    ))
}

fn run_cli(dir: &Path, extra: &[&str], args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_echoloop"))
        .arg("--artifact-dir")
        .arg(dir)
        .args(extra)
        .args(args)
        .env_remove("ECHOLOOP_ARTIFACT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        if name.starts_with("manifest_") {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            for s in v["stages"].as_array_mut().ok_or("manifest without stages")? {
                s["seconds"] = serde_json::Value::Null;
            }
            bytes = serde_json::to_vec(&v).map_err(|e| e.to_string())?;
        }
        files.insert(name, bytes);
    }
    Ok(files)
}

fn c12_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let stages: [&[&str]; 7] = [
        &["ingest", "--synth"],
        &["split"],
        &["train"],
        &["experiment", "--arms", "base,mmr,dccf", "--sweep-alpha"],
        &["markov", "--d", "3", "--m", "3", "--type", "type3", "--p", "0.5", "--trajectories", "20000"],
        &["markov", "--d", "2", "--m", "2", "--type", "type1", "--start", "0,1", "--trajectories", "20000"],
        &["satisfy"],
    ];
    let mut snaps = Vec::new();
    for (run, extra) in [("a", &[][..]), ("b", &["--sequential"][..])] {
        let dir = root.path().join(run);
        for args in stages {
            run_cli(&dir, extra, args)?;
        }
        snaps.push(snapshot(&dir)?);
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    check(a.keys().eq(b.keys()), "runs produced different file sets")?;
    let differing: Vec<&String> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k).collect();
    check(differing.is_empty(), format!("differing outputs: {differing:?}"))?;
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} artifacts ({bytes} bytes) identical across a parallel and a sequential re-run; manifests compared without timings", a.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("Markov exactness", c1_markov_exactness),
        ("Type-2 uniform limit", c2_type2_uniform_limit),
        ("Type-3 irreducibility", c3_type3_irreducibility),
        ("counterfactual reduction at n=0", c4_reduction),
        ("weight law", c5_weight_law),
        ("counterfactual argmin", c6_counterfactual_argmin),
        ("diversity metric", c7_diversity),
        ("ranking metrics", c8_ranking_metrics),
        ("directional echo-chamber mitigation", c9_echo_chamber),
        ("directional satisfaction", c10_satisfaction),
        ("sensitivity sweep shape", c11_sweep),
        ("determinism", c12_determinism),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
