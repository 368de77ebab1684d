use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::absorbing::{decompose_absorbing, k_step};
use super::chain::{ChainKernel, RecGroupDist, TransitionModel};
use super::simulate::simulate_final_states;
use super::state::{GroupState, StateSpace};
use super::EXACT_STATE_CAP;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;

/// Dense mixing profiles are only computed up to this many states.
const MIXING_STATE_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorName {
    #[serde(alias = "type1")]
    RecOnly,
    #[serde(alias = "type2")]
    IgnoreRec,
    #[serde(alias = "type3")]
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecDistMode {
    #[default]
    HistoryFrequency,
    Uniform,
    Fixed(Vec<f64>),
}

impl From<&RecDistMode> for RecGroupDist {
    fn from(mode: &RecDistMode) -> Self {
        match mode {
            RecDistMode::HistoryFrequency => RecGroupDist::HistoryFrequency,
            RecDistMode::Uniform => RecGroupDist::Uniform,
            RecDistMode::Fixed(p) => RecGroupDist::Fixed(p.clone()),
        }
    }
}

/// Chain description as read from a JSON chain spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub d: usize,
    pub m: usize,
    pub behavior_type: BehaviorName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Defaults to uniform when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_group_dist: Option<Vec<f64>>,
    #[serde(default)]
    pub rec_dist_mode: RecDistMode,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            d: 3,
            m: 2,
            behavior_type: BehaviorName::RecOnly,
            p: None,
            free_group_dist: None,
            rec_dist_mode: RecDistMode::default(),
        }
    }
}

impl ChainSpec {
    fn free(&self) -> Vec<f64> {
        self.free_group_dist
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.d as f64; self.d])
    }

    pub fn kernel(&self) -> Result<ChainKernel> {
        let rec = RecGroupDist::from(&self.rec_dist_mode);
        match self.behavior_type {
            BehaviorName::RecOnly => ChainKernel::type1(self.d, self.m, rec),
            BehaviorName::IgnoreRec => ChainKernel::type2(self.d, self.m, &self.free()),
            BehaviorName::Mixed => {
                let p = self
                    .p
                    .ok_or_else(|| invalid("behavior_type mixed requires p"))?;
                ChainKernel::type3(self.d, self.m, rec, &self.free(), p)
            }
        }
    }

    pub fn model(&self) -> Result<TransitionModel> {
        TransitionModel::from_kernel(self.kernel()?)
    }
}

/// Row spread of `P^k`: how far its rows are from being identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingPoint {
    pub k: usize,
    /// max over columns of (max row value - min row value).
    pub row_spread: f64,
    pub min_entry: f64,
}

pub fn mixing_profile(model: &TransitionModel, k_max: usize) -> Vec<MixingPoint> {
    let p = model.to_dense();
    let mut pk = DMatrix::identity(p.nrows(), p.ncols());
    (1..=k_max)
        .map(|k| {
            pk = &pk * &p;
            MixingPoint {
                k,
                row_spread: row_spread(&pk),
                min_entry: pk.min(),
            }
        })
        .collect()
}

fn row_spread(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.max() - c.min())
        .fold(0.0, f64::max)
}

/// Smallest `k <= k_max` whose `P^k` has every entry within `tol` of `1/n`.
pub fn first_uniform_step(model: &TransitionModel, tol: f64, k_max: usize) -> Option<usize> {
    let n = model.n_states();
    let target = 1.0 / n as f64;
    let p = model.to_dense();
    let mut pk = DMatrix::identity(n, n);
    for k in 1..=k_max {
        pk = &pk * &p;
        if pk.iter().all(|x| (x - target).abs() <= tol) {
            return Some(k);
        }
    }
    None
}

/// Whether every entry of `P^m` is strictly positive, i.e. every state can
/// reach every other state in exactly `m` steps.
pub fn is_irreducible(model: &TransitionModel) -> bool {
    k_step(model, model.m() as u64).iter().all(|x| *x > 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub absorbing_states: Vec<String>,
    pub transient_states: Vec<String>,
    /// Absorption probabilities, rows over transient states.
    pub matrix: Vec<Vec<f64>>,
    pub expected_steps: Vec<f64>,
    pub condition: f64,
    /// `K` used for the limit check.
    pub limit_k: u64,
    /// max |P^K - block limit| over all entries.
    pub limit_max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub start: String,
    pub n_trajectories: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Final states that are constant sequences.
    pub final_constant_fraction: f64,
    pub mean_distinct_groups: f64,
    /// Empirical final-state frequencies over the compared states.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<Vec<f64>>,
    /// Exact probabilities for the same states.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub schema_version: u32,
    pub spec: ChainSpec,
    pub n_states: usize,
    pub exact: bool,
    /// "absorbing", "not_absorbing" or "unknown" (simulation only).
    pub classification: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification_detail: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub state_labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absorption: Option<AbsorptionReport>,
    /// Limiting matrix for absorbing chains.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub irreducible: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_uniform_step: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mixing: Vec<MixingPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloCheck>,
}

impl MarkovReport {
    /// Absorption matrix as CSV with a header of absorbing-state labels.
    pub fn absorption_csv(&self) -> Option<String> {
        let abs = self.absorption.as_ref()?;
        let mut out = String::from("state");
        for a in &abs.absorbing_states {
            out.push_str(&format!(",\"({a})\""));
        }
        out.push('\n');
        for (label, row) in abs.transient_states.iter().zip(&abs.matrix) {
            out.push_str(&format!("\"({label})\""));
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        Some(out)
    }

    pub fn limit_csv(&self) -> Option<String> {
        let limit = self.limit.as_ref()?;
        let mut out = String::from("state");
        for l in &self.state_labels {
            out.push_str(&format!(",\"({l})\""));
        }
        out.push('\n');
        for (label, row) in self.state_labels.iter().zip(limit) {
            out.push_str(&format!("\"({label})\""));
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        Some(out)
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// Skip the exact analysis even when the state space is small enough.
    pub simulate_only: bool,
    pub start: Option<GroupState>,
    pub n_trajectories: usize,
    /// Defaults to the absorption horizon (absorbing chains) or `2m`.
    pub horizon: Option<usize>,
    pub seed: u64,
    pub k_max: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            simulate_only: false,
            start: None,
            n_trajectories: 100_000,
            horizon: None,
            seed: 0,
            k_max: 16,
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn default_start(space: &StateSpace) -> GroupState {
    // Cycle through the groups: (0,1,..,d-1,0,..) is as far from any
    // constant sequence as the state space allows.
    GroupState::full((0..space.m()).map(|i| i % space.d()).collect())
}

fn final_state_stats(space: &StateSpace, finals: &[usize]) -> (f64, f64) {
    let n = finals.len() as f64;
    let mut constant = 0.0;
    let mut distinct = 0.0;
    for &s in finals {
        let mut groups = space.groups_of(s);
        if space.is_constant(s) {
            constant += 1.0;
        }
        groups.sort_unstable();
        groups.dedup();
        distinct += groups.len() as f64;
    }
    (constant / n, distinct / n)
}

/// Full analysis of a chain spec: classification, absorption probabilities,
/// limit and mixing diagnostics (exact mode) and a Monte-Carlo cross-check.
pub fn analyze(spec: &ChainSpec, opts: &AnalysisOptions, exec: Execution) -> Result<MarkovReport> {
    let kernel = spec.kernel()?;
    let space = *kernel.space();
    let n_states = space.n_states();
    let start = opts.start.clone().unwrap_or_else(|| default_start(&space));
    let start_index = space.index(&start)?;

    let exact = !opts.simulate_only && n_states <= EXACT_STATE_CAP;
    if !exact && !opts.simulate_only {
        return Err(Error::StateSpaceOverflow {
            states: n_states.to_string(),
            cap: EXACT_STATE_CAP,
        });
    }

    let mut report = MarkovReport {
        schema_version: crate::REPORT_SCHEMA_VERSION,
        spec: spec.clone(),
        n_states,
        exact,
        classification: "unknown".into(),
        classification_detail: None,
        state_labels: Vec::new(),
        absorption: None,
        limit: None,
        irreducible: None,
        first_uniform_step: None,
        mixing: Vec::new(),
        monte_carlo: None,
    };

    let mut compare: Option<(Vec<usize>, Vec<f64>)> = None;
    let mut horizon = opts.horizon.unwrap_or(2 * space.m());

    if exact {
        let model = TransitionModel::from_kernel(kernel.clone())?;
        report.state_labels = (0..n_states).map(|s| space.label(s)).collect();
        match decompose_absorbing(&model) {
            Ok(dec) => {
                report.classification = "absorbing".into();
                let limit = dec.limit_matrix();
                let limit_k = dec.convergence_horizon(1e-8);
                let diff = (k_step(&model, limit_k) - &limit).abs().max();
                if opts.horizon.is_none() {
                    horizon = usize::try_from(limit_k).unwrap_or(usize::MAX).max(horizon);
                }
                let exact_row = dec
                    .absorption_from(start_index)
                    .expect("every state is transient or absorbing");
                compare = Some((dec.absorbing_states.clone(), exact_row));
                report.absorption = Some(AbsorptionReport {
                    absorbing_states: dec.absorbing_states.iter().map(|&s| space.label(s)).collect(),
                    transient_states: dec.transient_states.iter().map(|&s| space.label(s)).collect(),
                    matrix: rows(&dec.absorption),
                    expected_steps: dec.expected_steps(),
                    condition: dec.condition,
                    limit_k,
                    limit_max_abs_diff: diff,
                });
                report.limit = Some(rows(&limit));
            }
            Err(Error::NotAbsorbingChain(why)) => {
                report.classification = "not_absorbing".into();
                report.classification_detail = Some(format!("NotAbsorbingChain: {why}"));
                let pk = k_step(&model, horizon as u64);
                let states: Vec<usize> = (0..n_states).collect();
                compare = Some((states, pk.row(start_index).iter().copied().collect()));
            }
            Err(e) => return Err(e),
        }
        report.irreducible = Some(is_irreducible(&model));
        if n_states <= MIXING_STATE_CAP {
            report.first_uniform_step = first_uniform_step(&model, 1e-12, opts.k_max);
            report.mixing = mixing_profile(&model, opts.k_max);
        }
    }

    let finals = simulate_final_states(&kernel, &start, horizon, opts.n_trajectories, opts.seed, exec)?;
    let (final_constant_fraction, mean_distinct_groups) = final_state_stats(&space, &finals);
    let mut mc = MonteCarloCheck {
        start: space.label(start_index),
        n_trajectories: opts.n_trajectories,
        horizon,
        seed: opts.seed,
        final_constant_fraction,
        mean_distinct_groups,
        empirical: None,
        exact: None,
        max_abs_diff: None,
    };
    if let Some((states, exact_row)) = compare {
        let mut counts = vec![0usize; n_states];
        for &s in &finals {
            counts[s] += 1;
        }
        let empirical: Vec<f64> = states
            .iter()
            .map(|&s| counts[s] as f64 / finals.len() as f64)
            .collect();
        let diff = empirical
            .iter()
            .zip(&exact_row)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        mc.empirical = Some(empirical);
        mc.exact = Some(exact_row);
        mc.max_abs_diff = Some(diff);
    }
    report.monte_carlo = Some(mc);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> ChainSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn parses_chain_spec() {
        let s = spec(r#"{"d":3,"m":2,"behavior_type":"type3","p":0.5,"free_group_dist":[0.2,0.3,0.5],"rec_dist_mode":"uniform"}"#);
        assert_eq!(s.behavior_type, BehaviorName::Mixed);
        assert_eq!(s.rec_dist_mode, RecDistMode::Uniform);
        let s = spec(r#"{"d":2,"m":2,"behavior_type":"rec_only","rec_dist_mode":{"fixed":[0.7,0.3]}}"#);
        assert_eq!(s.rec_dist_mode, RecDistMode::Fixed(vec![0.7, 0.3]));
        assert!(serde_json::from_str::<ChainSpec>(r#"{"d":2,"m":2,"behavior_type":"x"}"#).is_err());
        let missing_p = spec(r#"{"d":2,"m":2,"behavior_type":"mixed"}"#);
        assert!(missing_p.kernel().is_err());
    }

    #[test]
    fn type1_report_contains_absorption_row() {
        let s = spec(r#"{"d":2,"m":2,"behavior_type":"type1","rec_dist_mode":"uniform"}"#);
        let opts = AnalysisOptions {
            start: Some(GroupState::full(vec![0, 1])),
            n_trajectories: 20_000,
            ..Default::default()
        };
        let r = analyze(&s, &opts, Execution::Parallel).unwrap();
        assert_eq!(r.classification, "absorbing");
        let abs = r.absorption.as_ref().unwrap();
        assert_eq!(abs.absorbing_states, vec!["0,0", "1,1"]);
        let row = &abs.matrix[abs.transient_states.iter().position(|s| s == "0,1").unwrap()];
        assert!((row[0] - 1.0 / 3.0).abs() < 1e-12 && (row[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(abs.limit_max_abs_diff < 1e-6);
        assert!(r.monte_carlo.as_ref().unwrap().max_abs_diff.unwrap() < 0.02);
        assert!(r.absorption_csv().unwrap().contains("\"(0,1)\""));
    }

    #[test]
    fn type2_report_is_not_absorbing() {
        let s = spec(r#"{"d":3,"m":2,"behavior_type":"ignore_rec"}"#);
        let opts = AnalysisOptions {
            n_trajectories: 1000,
            ..Default::default()
        };
        let r = analyze(&s, &opts, Execution::Sequential).unwrap();
        assert_eq!(r.classification, "not_absorbing");
        assert!(r.classification_detail.as_ref().unwrap().contains("NotAbsorbingChain"));
        assert_eq!(r.first_uniform_step, Some(2));
        assert_eq!(r.irreducible, Some(true));
    }

    #[test]
    fn large_chain_needs_simulation() {
        let s = spec(r#"{"d":4,"m":9,"behavior_type":"type1"}"#);
        let err = analyze(&s, &AnalysisOptions::default(), Execution::Parallel).unwrap_err();
        assert!(matches!(err, Error::StateSpaceOverflow { .. }));
        let opts = AnalysisOptions {
            simulate_only: true,
            n_trajectories: 200,
            horizon: Some(500),
            ..Default::default()
        };
        let r = analyze(&s, &opts, Execution::Parallel).unwrap();
        assert!(!r.exact);
        let mc = r.monte_carlo.unwrap();
        assert!(mc.final_constant_fraction > 0.9, "{mc:?}");
    }
}
