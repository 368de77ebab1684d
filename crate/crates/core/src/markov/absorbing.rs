use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::chain::TransitionModel;
use crate::error::{Error, Result};

/// Condition numbers above this are treated as numerically singular.
const MAX_CONDITION: f64 = 1e13;

/// Canonical block form of an absorbing chain.
#[derive(Debug, Clone)]
pub struct AbsorbingDecomposition {
    pub transient_states: Vec<usize>,
    pub absorbing_states: Vec<usize>,
    /// Transient to transient transitions.
    pub q: DMatrix<f64>,
    /// Transient to absorbing transitions.
    pub r: DMatrix<f64>,
    /// Fundamental matrix `(I - Q)^-1`.
    pub fundamental: DMatrix<f64>,
    /// Absorption probabilities `N R`, rows over transient states.
    pub absorption: DMatrix<f64>,
    /// 1-norm condition estimate of `I - Q`.
    pub condition: f64,
}

impl AbsorbingDecomposition {
    /// Expected number of steps before absorption from each transient state.
    pub fn expected_steps(&self) -> Vec<f64> {
        self.fundamental.row_iter().map(|r| r.sum()).collect()
    }

    /// Absorption distribution from any state, indexed like `absorbing_states`.
    pub fn absorption_from(&self, state: usize) -> Option<Vec<f64>> {
        if let Some(pos) = self.absorbing_states.iter().position(|&s| s == state) {
            let mut row = vec![0.0; self.absorbing_states.len()];
            row[pos] = 1.0;
            return Some(row);
        }
        let t = self.transient_states.iter().position(|&s| s == state)?;
        Some(self.absorption.row(t).iter().copied().collect())
    }

    /// `lim P^k` in the original state ordering.
    pub fn limit_matrix(&self) -> DMatrix<f64> {
        let n = self.transient_states.len() + self.absorbing_states.len();
        let mut limit = DMatrix::zeros(n, n);
        for &a in &self.absorbing_states {
            limit[(a, a)] = 1.0;
        }
        for (ti, &t) in self.transient_states.iter().enumerate() {
            for (ai, &a) in self.absorbing_states.iter().enumerate() {
                limit[(t, a)] = self.absorption[(ti, ai)];
            }
        }
        limit
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Splits an absorbing chain into `Q`, `R` and computes `N = (I - Q)^-1`
/// and `B = N R` by LU decomposition with partial pivoting.
pub fn decompose_absorbing(model: &TransitionModel) -> Result<AbsorbingDecomposition> {
    let n = model.n_states();
    let absorbing: Vec<usize> = (0..n).filter(|&s| model.is_absorbing(s)).collect();
    if absorbing.is_empty() {
        return Err(Error::NotAbsorbingChain("no state has a self-loop of probability 1".into()));
    }

    // Every state must reach some absorbing state: walk edges backwards.
    let mut predecessors = vec![Vec::new(); n];
    for (s, row) in model.rows().iter().enumerate() {
        for &(t, _) in row {
            predecessors[t].push(s);
        }
    }
    let mut reaches = vec![false; n];
    let mut queue: VecDeque<usize> = absorbing.iter().copied().collect();
    for &a in &absorbing {
        reaches[a] = true;
    }
    while let Some(s) = queue.pop_front() {
        for &p in &predecessors[s] {
            if !reaches[p] {
                reaches[p] = true;
                queue.push_back(p);
            }
        }
    }
    if let Some(stuck) = reaches.iter().position(|r| !r) {
        return Err(Error::NotAbsorbingChain(format!(
            "state ({}) cannot reach any absorbing state",
            model.kernel().space_label(stuck)
        )));
    }

    let mut position = vec![None; n];
    let transient: Vec<usize> = (0..n).filter(|s| !model.is_absorbing(*s)).collect();
    for (i, &s) in transient.iter().enumerate() {
        position[s] = Some((true, i));
    }
    for (i, &s) in absorbing.iter().enumerate() {
        position[s] = Some((false, i));
    }

    let nt = transient.len();
    let na = absorbing.len();
    let mut q = DMatrix::zeros(nt, nt);
    let mut r = DMatrix::zeros(nt, na);
    for (ti, &s) in transient.iter().enumerate() {
        for &(t, p) in model.row(s) {
            match position[t] {
                Some((true, j)) => q[(ti, j)] = p,
                Some((false, j)) => r[(ti, j)] = p,
                None => unreachable!(),
            }
        }
    }

    if nt == 0 {
        return Ok(AbsorbingDecomposition {
            transient_states: transient,
            absorbing_states: absorbing,
            q,
            r,
            fundamental: DMatrix::zeros(0, 0),
            absorption: DMatrix::zeros(0, na),
            condition: 1.0,
        });
    }

    let i_minus_q = DMatrix::identity(nt, nt) - &q;
    let fundamental = i_minus_q
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularMatrix {
            condition: f64::INFINITY,
        })?;
    let condition = one_norm(&i_minus_q) * one_norm(&fundamental);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularMatrix { condition });
    }
    let absorption = &fundamental * &r;

    Ok(AbsorbingDecomposition {
        transient_states: transient,
        absorbing_states: absorbing,
        q,
        r,
        fundamental,
        absorption,
        condition,
    })
}

/// `P^k` by repeated squaring; `P^0` is the identity.
pub fn k_step(model: &TransitionModel, k: u64) -> DMatrix<f64> {
    let n = model.n_states();
    let mut result = DMatrix::identity(n, n);
    let mut base = model.to_dense();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

impl AbsorbingDecomposition {
    /// Smallest power of two `K` with every row sum of `Q^K` below `tol`, so
    /// that `P^K` agrees with the block limit to about `tol`.
    pub fn convergence_horizon(&self, tol: f64) -> u64 {
        if self.q.nrows() == 0 {
            return 1;
        }
        let mut qk = self.q.clone();
        let mut k = 1u64;
        while qk.row_iter().map(|r| r.sum()).fold(0.0, f64::max) >= tol && k < 1 << 30 {
            qk = &qk * &qk;
            k *= 2;
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{build_type1, build_type2, RecGroupDist};
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_by_two_hand_values() {
        let model = build_type1(2, 2, RecGroupDist::Uniform).unwrap();
        let dec = decompose_absorbing(&model).unwrap();
        // States: (0,0)=0, (0,1)=1, (1,0)=2, (1,1)=3.
        assert_eq!(dec.absorbing_states, vec![0, 3]);
        assert_eq!(dec.transient_states, vec![1, 2]);
        assert_eq!(dec.q, DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        let expected_n = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert!((&dec.fundamental - expected_n).abs().max() < 1e-12);
        let from_ab = dec.absorption_from(1).unwrap();
        assert_abs_diff_eq!(from_ab[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(from_ab[1], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn type1_has_d_absorbing_states() {
        for (d, m) in [(2, 3), (3, 2), (3, 3), (4, 2), (2, 5)] {
            let model = build_type1(d, m, RecGroupDist::HistoryFrequency).unwrap();
            let dec = decompose_absorbing(&model).unwrap();
            assert_eq!(dec.absorbing_states.len(), d);
            for &a in &dec.absorbing_states {
                assert!(model.kernel().space().is_constant(a));
            }
            for row in dec.absorption.row_iter() {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-9);
            }
            assert!(dec.fundamental.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn type2_is_not_absorbing() {
        let model = build_type2(2, 2, &[0.5, 0.5]).unwrap();
        assert!(matches!(decompose_absorbing(&model), Err(Error::NotAbsorbingChain(_))));
    }

    #[test]
    fn m1_has_no_transient_states() {
        let model = build_type1(3, 1, RecGroupDist::Uniform).unwrap();
        let dec = decompose_absorbing(&model).unwrap();
        assert!(dec.transient_states.is_empty());
        assert_eq!(dec.limit_matrix(), DMatrix::identity(3, 3));
    }

    #[test]
    fn k_step_identity_and_square() {
        let model = build_type2(2, 2, &[0.5, 0.5]).unwrap();
        assert_eq!(k_step(&model, 0), DMatrix::identity(4, 4));
        let p2 = k_step(&model, 2);
        assert!(p2.iter().all(|x| (*x - 0.25).abs() < 1e-15));
        let dense = model.to_dense();
        assert_eq!(k_step(&model, 1), dense);
        let p5 = k_step(&model, 5);
        let naive = &dense * &dense * &dense * &dense * &dense;
        assert!((p5 - naive).abs().max() < 1e-15);
    }
}
