//! Measurement protocols: content diversity, sampled ranking metrics, MMR
//! re-ranking and the exit-mechanism satisfaction simulation.

mod diversity;
mod mmr;
mod ranking;
mod satisfaction;

pub use diversity::{content_diversity, diversity_change, list_diversity, DiversityDelta, DiversityReport, PhaseRecs};
pub use mmr::mmr_rerank;
pub use ranking::{corrected_rank, rank_of_target, ranking_metrics, sample_negatives, RankMetrics, RankingReport};
pub use satisfaction::{
    satisfaction_study, simulate_satisfaction, synth_interest_matrix, write_trace_jsonl, BasePolicy,
    CounterfactualPolicy, InterestConfig, InterestMatrix, Policy, PolicySummary, Round, SatisfactionConfig,
    SatisfactionOutcome, SatisfactionStudy, StudyConfig,
};

/// Mean with Neumaier-compensated summation; zero for no values.
pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c, mut n) = (0.0f64, 0.0f64, 0usize);
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum + c) / n as f64
    }
}
