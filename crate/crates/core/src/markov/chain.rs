use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::state::StateSpace;
use super::{EXACT_STATE_CAP, ROW_SUM_TOL};
use crate::error::{invalid, Error, Result};

/// How users pick the next interacted item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BehaviorType {
    /// Only ever interacts with recommended items.
    RecOnly,
    /// Ignores recommendations entirely.
    IgnoreRec,
    /// Follows a recommendation with probability `p`, explores otherwise.
    Mixed(f64),
}

impl BehaviorType {
    pub fn name(&self) -> &'static str {
        match self {
            BehaviorType::RecOnly => "rec_only",
            BehaviorType::IgnoreRec => "ignore_rec",
            BehaviorType::Mixed(_) => "mixed",
        }
    }
}

type GroupDistFn = dyn Fn(&[usize]) -> Vec<f64> + Send + Sync;

/// Probability that the recommended item falls in each group, given the
/// current group history. Masses need not be normalised; groups absent from
/// the history are zeroed and the rest renormalised.
#[derive(Clone)]
pub enum RecGroupDist {
    /// Proportional to each group's frequency in the history.
    HistoryFrequency,
    /// Equal mass on every group.
    Uniform,
    /// The same masses for every state.
    Fixed(Vec<f64>),
    /// Arbitrary per-state masses.
    Custom(Arc<GroupDistFn>),
}

impl fmt::Debug for RecGroupDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecGroupDist::HistoryFrequency => write!(f, "HistoryFrequency"),
            RecGroupDist::Uniform => write!(f, "Uniform"),
            RecGroupDist::Fixed(p) => f.debug_tuple("Fixed").field(p).finish(),
            RecGroupDist::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl RecGroupDist {
    fn masses(&self, history: &[usize], d: usize) -> Result<Vec<f64>> {
        let masses = match self {
            RecGroupDist::HistoryFrequency => {
                let mut counts = vec![0.0; d];
                for &g in history {
                    counts[g] += 1.0;
                }
                let len = history.len() as f64;
                counts.iter().map(|c| c / len).collect()
            }
            RecGroupDist::Uniform => vec![1.0 / d as f64; d],
            RecGroupDist::Fixed(p) => p.clone(),
            RecGroupDist::Custom(f) => f(history),
        };
        if masses.len() != d {
            return Err(invalid(format!(
                "recommendation group distribution has {} entries, expected {d}",
                masses.len()
            )));
        }
        if masses.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("recommendation group masses must be finite and non-negative"));
        }
        Ok(masses)
    }

    fn validate(&self, d: usize) -> Result<()> {
        if let RecGroupDist::Fixed(p) = self {
            if p.len() != d {
                return Err(invalid(format!("fixed distribution has {} entries, expected {d}", p.len())));
            }
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(invalid("fixed distribution must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Transition probabilities of a chain, addressed by state index.
pub trait Transitions: Sync {
    fn space(&self) -> &StateSpace;

    /// Successors of `state` with positive probability, ascending by index.
    fn successors(&self, state: usize) -> Result<Vec<(usize, f64)>>;
}

/// Chain parameters that compute rows on demand; usable for any `d^m` that
/// fits a machine word.
#[derive(Debug, Clone)]
pub struct ChainKernel {
    space: StateSpace,
    behavior: BehaviorType,
    rec: Option<RecGroupDist>,
    free: Option<Vec<f64>>,
}

fn validate_free(free: &[f64], d: usize) -> Result<Vec<f64>> {
    if free.len() != d {
        return Err(invalid(format!(
            "free group distribution has {} entries, expected {d}",
            free.len()
        )));
    }
    if free.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(invalid(
            "free group distribution must be strictly positive (every group needs nonzero probability)",
        ));
    }
    let sum: f64 = free.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("free group distribution sums to {sum}, expected 1")));
    }
    Ok(free.iter().map(|p| p / sum).collect())
}

impl ChainKernel {
    pub fn type1(d: usize, m: usize, rec: RecGroupDist) -> Result<Self> {
        let space = StateSpace::new(d, m)?;
        rec.validate(d)?;
        Ok(Self {
            space,
            behavior: BehaviorType::RecOnly,
            rec: Some(rec),
            free: None,
        })
    }

    pub fn type2(d: usize, m: usize, free: &[f64]) -> Result<Self> {
        let space = StateSpace::new(d, m)?;
        Ok(Self {
            space,
            behavior: BehaviorType::IgnoreRec,
            rec: None,
            free: Some(validate_free(free, d)?),
        })
    }

    pub fn type3(d: usize, m: usize, rec: RecGroupDist, free: &[f64], p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!(
                "mixing probability p = {p} must lie strictly in (0, 1); use build_type1 for p = 1 or build_type2 for p = 0"
            )));
        }
        let space = StateSpace::new(d, m)?;
        rec.validate(d)?;
        Ok(Self {
            space,
            behavior: BehaviorType::Mixed(p),
            rec: Some(rec),
            free: Some(validate_free(free, d)?),
        })
    }

    pub fn behavior(&self) -> BehaviorType {
        self.behavior
    }

    pub fn rec_dist(&self) -> Option<&RecGroupDist> {
        self.rec.as_ref()
    }

    pub fn free_dist(&self) -> Option<&[f64]> {
        self.free.as_deref()
    }

    /// Recommendation-driven next-group distribution: masses outside the
    /// history are zeroed and the remainder renormalised.
    fn follow_distribution(&self, groups: &[usize]) -> Result<Vec<f64>> {
        let d = self.space.d();
        let rec = self.rec.as_ref().expect("rec distribution present for this behaviour");
        let mut masses = rec.masses(groups, d)?;
        let mut in_history = vec![false; d];
        for &g in groups {
            in_history[g] = true;
        }
        for (g, mass) in masses.iter_mut().enumerate() {
            if !in_history[g] {
                *mass = 0.0;
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateDistribution {
                state: format!("({})", self.space.label(self.space.index_of(groups))),
            });
        }
        Ok(masses.into_iter().map(|p| p / total).collect())
    }

    /// Distribution over the group appended at the next step.
    pub fn next_group_distribution(&self, state: usize) -> Result<Vec<f64>> {
        let groups = self.space.groups_of(state);
        match self.behavior {
            BehaviorType::RecOnly => self.follow_distribution(&groups),
            BehaviorType::IgnoreRec => Ok(self.free.clone().expect("free distribution present")),
            BehaviorType::Mixed(p) => {
                let follow = self.follow_distribution(&groups)?;
                let free = self.free.as_ref().expect("free distribution present");
                Ok(follow
                    .iter()
                    .zip(free)
                    .map(|(f, e)| f * p + e * (1.0 - p))
                    .collect())
            }
        }
    }
}

impl Transitions for ChainKernel {
    fn space(&self) -> &StateSpace {
        &self.space
    }

    fn successors(&self, state: usize) -> Result<Vec<(usize, f64)>> {
        let dist = self.next_group_distribution(state)?;
        Ok(dist
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .map(|(g, p)| (self.space.successor(state, g), p))
            .collect())
    }
}

/// A chain with every row materialised, for exact analysis.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    kernel: ChainKernel,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionModel {
    /// Materialises all rows of `kernel`; fails beyond [`EXACT_STATE_CAP`].
    pub fn from_kernel(kernel: ChainKernel) -> Result<Self> {
        let n = kernel.space.n_states();
        if n > EXACT_STATE_CAP {
            return Err(Error::StateSpaceOverflow {
                states: n.to_string(),
                cap: EXACT_STATE_CAP,
            });
        }
        let rows = (0..n)
            .map(|s| kernel.successors(s))
            .collect::<Result<Vec<_>>>()?;
        for (s, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            debug_assert!((sum - 1.0).abs() <= ROW_SUM_TOL, "row {s} sums to {sum}");
        }
        Ok(Self { kernel, rows })
    }

    pub fn kernel(&self) -> &ChainKernel {
        &self.kernel
    }

    pub fn behavior(&self) -> BehaviorType {
        self.kernel.behavior
    }

    pub fn d(&self) -> usize {
        self.kernel.space.d()
    }

    pub fn m(&self) -> usize {
        self.kernel.space.m()
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, state: usize) -> &[(usize, f64)] {
        &self.rows[state]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .iter()
            .find(|(s, _)| *s == to)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Whether `state` moves to itself with probability one.
    pub fn is_absorbing(&self, state: usize) -> bool {
        matches!(self.rows[state].as_slice(), [(s, p)] if *s == state && (p - 1.0).abs() <= ROW_SUM_TOL)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_states();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[(i, j)] = p;
            }
        }
        m
    }
}

impl Transitions for TransitionModel {
    fn space(&self) -> &StateSpace {
        &self.kernel.space
    }

    fn successors(&self, state: usize) -> Result<Vec<(usize, f64)>> {
        Ok(self.rows[state].clone())
    }
}

/// Users who only interact with recommended items.
pub fn build_type1(d: usize, m: usize, rec: RecGroupDist) -> Result<TransitionModel> {
    TransitionModel::from_kernel(ChainKernel::type1(d, m, rec)?)
}

/// Users who ignore recommendations.
pub fn build_type2(d: usize, m: usize, free: &[f64]) -> Result<TransitionModel> {
    TransitionModel::from_kernel(ChainKernel::type2(d, m, free)?)
}

/// Users who follow a recommendation with probability `p`.
pub fn build_type3(
    d: usize,
    m: usize,
    rec: RecGroupDist,
    free: &[f64],
    p: f64,
) -> Result<TransitionModel> {
    TransitionModel::from_kernel(ChainKernel::type3(d, m, rec, free, p)?)
}

impl ChainKernel {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub(crate) fn space_label(&self, state: usize) -> String {
        self.space.label(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform(d: usize) -> Vec<f64> {
        vec![1.0 / d as f64; d]
    }

    #[test]
    fn type1_constant_state_is_absorbing() {
        let model = build_type1(2, 2, RecGroupDist::Uniform).unwrap();
        let s = model.kernel().space().index_of(&[0, 0]);
        assert_eq!(model.row(s), &[(s, 1.0)]);
        assert!(model.is_absorbing(s));
    }

    #[test]
    fn type1_mixed_history_splits_evenly() {
        for rec in [RecGroupDist::Uniform, RecGroupDist::HistoryFrequency] {
            let model = build_type1(2, 2, rec).unwrap();
            let space = *model.kernel().space();
            let ab = space.index_of(&[0, 1]);
            assert_eq!(model.probability(ab, space.index_of(&[1, 0])), 0.5);
            assert_eq!(model.probability(ab, space.index_of(&[1, 1])), 0.5);
            assert_eq!(model.row(ab).len(), 2);
        }
    }

    #[test]
    fn type1_excludes_groups_outside_history() {
        let model = build_type1(3, 2, RecGroupDist::Uniform).unwrap();
        let space = *model.kernel().space();
        let ab = space.index_of(&[0, 1]);
        assert_eq!(model.probability(ab, space.index_of(&[1, 2])), 0.0);
    }

    #[test]
    fn type1_degenerate_distribution() {
        // All recommendation mass on group 2, which never appears in (0,0).
        let err = build_type1(3, 2, RecGroupDist::Fixed(vec![0.0, 0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateDistribution { .. }));
    }

    #[test]
    fn type1_fixed_distribution_renormalises() {
        let model = build_type1(3, 2, RecGroupDist::Fixed(vec![0.6, 0.3, 0.1])).unwrap();
        let space = *model.kernel().space();
        let s = space.index_of(&[0, 1]);
        assert_abs_diff_eq!(model.probability(s, space.index_of(&[1, 0])), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(model.probability(s, space.index_of(&[1, 1])), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn type2_rows() {
        let model = build_type2(2, 2, &uniform(2)).unwrap();
        for row in model.rows() {
            assert_eq!(row.len(), 2);
            assert!(row.iter().all(|(_, p)| *p == 0.5));
        }
        let m1 = build_type2(3, 1, &[0.5, 0.3, 0.2]).unwrap();
        for s in 0..3 {
            assert_eq!(m1.row(s), &[(0, 0.5), (1, 0.3), (2, 0.2)]);
        }
    }

    #[test]
    fn type2_rejects_zero_mass() {
        assert!(build_type2(3, 2, &[0.5, 0.5, 0.0]).is_err());
        assert!(build_type2(2, 2, &[0.6, 0.6]).is_err());
    }

    #[test]
    fn type3_hand_values() {
        let model = build_type3(2, 2, RecGroupDist::Uniform, &uniform(2), 0.5).unwrap();
        let space = *model.kernel().space();
        let aa = space.index_of(&[0, 0]);
        assert_eq!(model.probability(aa, aa), 0.75);
        assert_eq!(model.probability(aa, space.index_of(&[0, 1])), 0.25);
    }

    #[test]
    fn type3_rejects_boundary_p() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            let err = build_type3(2, 2, RecGroupDist::Uniform, &uniform(2), p).unwrap_err();
            assert!(err.to_string().contains("build_type"), "{err}");
        }
    }

    #[test]
    fn exact_cap_enforced() {
        let err = build_type2(2, 17, &uniform(2)).unwrap_err();
        assert!(matches!(err, Error::StateSpaceOverflow { .. }));
        // The on-demand kernel still works.
        let kernel = ChainKernel::type2(2, 17, &uniform(2)).unwrap();
        assert_eq!(kernel.successors(0).unwrap().len(), 2);
    }

    #[test]
    fn custom_distribution_is_pluggable() {
        let rec = RecGroupDist::Custom(Arc::new(|h: &[usize]| {
            let mut p = vec![0.0; 2];
            p[*h.last().unwrap()] = 1.0;
            p
        }));
        let model = build_type1(2, 2, rec).unwrap();
        let space = *model.kernel().space();
        let ab = space.index_of(&[0, 1]);
        assert_eq!(model.row(ab), &[(space.index_of(&[1, 1]), 1.0)]);
    }
}
