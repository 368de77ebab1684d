//! Markov chains over historical group sequences.
//!
//! A state is the sequence of group labels of the last `m` interacted items.
//! Each step drops the oldest label and appends the group of the newly
//! interacted item, so a state has at most `d` successors. Three behaviour
//! types are supported: users who only follow recommendations (absorbing
//! chains whose absorbing states are the constant sequences), users who
//! ignore them, and a mixture of the two.
//!
//! States are indexed lexicographically, first group most significant. The
//! exact analyses ([`decompose_absorbing`], [`k_step`]) materialise dense
//! matrices and are limited to [`EXACT_STATE_CAP`] states; [`simulate`] works
//! on a [`ChainKernel`] that computes rows on demand and has no such cap.

mod absorbing;
mod chain;
mod report;
mod simulate;
mod state;

pub use absorbing::{decompose_absorbing, k_step, AbsorbingDecomposition};
pub use chain::{
    build_type1, build_type2, build_type3, BehaviorType, ChainKernel, RecGroupDist,
    TransitionModel, Transitions,
};
pub use report::{
    AnalysisOptions, BehaviorName,
    analyze, first_uniform_step, is_irreducible, mixing_profile, AbsorptionReport, ChainSpec,
    MarkovReport, MixingPoint, MonteCarloCheck, RecDistMode,
};
pub use simulate::{simulate, simulate_final_states, TrajectoryEnsemble};
pub use state::{GroupState, StateSpace};

/// Largest state count for which dense exact analysis is allowed.
pub const EXACT_STATE_CAP: usize = 1 << 16;

/// Tolerance used when checking that a row is stochastic.
pub const ROW_SUM_TOL: f64 = 1e-12;
