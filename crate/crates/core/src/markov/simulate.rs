use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::chain::Transitions;
use super::state::GroupState;
use crate::error::{invalid, Result};
use crate::exec::{try_map_indexed, Execution};

/// Sampled state paths, one independent RNG stream per trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    /// Each path holds `horizon + 1` state indices, starting state first.
    pub trajectories: Vec<Vec<usize>>,
    /// Base seed; trajectory `i` uses stream `i` of this seed.
    pub seed: u64,
    pub horizon: usize,
}

impl TrajectoryEnsemble {
    pub fn stream_of(&self, trajectory: usize) -> (u64, u64) {
        (self.seed, trajectory as u64)
    }

    pub fn final_states(&self) -> Vec<usize> {
        self.trajectories
            .iter()
            .map(|t| *t.last().expect("non-empty path"))
            .collect()
    }

    /// Fraction of trajectories in each state after `step` steps.
    pub fn empirical_distribution(&self, step: usize, n_states: usize) -> Vec<f64> {
        let mut counts = vec![0.0; n_states];
        for t in &self.trajectories {
            counts[t[step.min(self.horizon)]] += 1.0;
        }
        let total = self.trajectories.len() as f64;
        counts.iter().map(|c| c / total).collect()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF draw over successors in ascending state order. A single
/// successor is taken without consuming randomness.
fn step(row: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    if let [(only, _)] = row {
        return *only;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(s, p) in row {
        acc += p;
        if u < acc {
            return s;
        }
    }
    row.last().expect("non-empty row").0
}

fn check_args<T: Transitions>(model: &T, start: &GroupState, horizon: usize, n_traj: usize) -> Result<usize> {
    if horizon == 0 || n_traj == 0 {
        return Err(invalid("simulation needs horizon >= 1 and at least one trajectory"));
    }
    model.space().index(start)
}

/// Samples `n_traj` paths of `horizon` steps from `start`.
///
/// Results depend only on `seed`, never on the execution strategy.
pub fn simulate<T: Transitions>(
    model: &T,
    start: &GroupState,
    horizon: usize,
    n_traj: usize,
    seed: u64,
    exec: Execution,
) -> Result<TrajectoryEnsemble> {
    let start = check_args(model, start, horizon, n_traj)?;
    let trajectories = try_map_indexed(n_traj, exec, |i| -> Result<Vec<usize>> {
        let mut rng = stream_rng(seed, i as u64);
        let mut path = Vec::with_capacity(horizon + 1);
        let mut state = start;
        path.push(state);
        for _ in 0..horizon {
            state = step(&model.successors(state)?, &mut rng);
            path.push(state);
        }
        Ok(path)
    })?;
    Ok(TrajectoryEnsemble {
        trajectories,
        seed,
        horizon,
    })
}

/// Final states only, without storing paths. Matches
/// `simulate(..).final_states()` exactly.
pub fn simulate_final_states<T: Transitions>(
    model: &T,
    start: &GroupState,
    horizon: usize,
    n_traj: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<usize>> {
    let start = check_args(model, start, horizon, n_traj)?;
    try_map_indexed(n_traj, exec, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let mut state = start;
        for _ in 0..horizon {
            let row = model.successors(state)?;
            if matches!(row.as_slice(), [(s, _)] if *s == state) {
                break;
            }
            state = step(&row, &mut rng);
        }
        Ok(state)
    })
}
