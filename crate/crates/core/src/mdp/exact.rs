use serde::{Deserialize, Serialize};

use super::{MdpModel, TablePolicy};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Backward-induction solution on a finite state space with finite-support noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    /// `values[h][i] = V*_h(states[i])`, `h = 0..=H`.
    pub values: Vec<Vec<f64>>,
    /// `q[h][i][j] = Q*_h(states[i], actions[j])`, `h = 0..H-1`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// `policy[h][i]` is the index of the optimal action (lowest index on ties).
    pub policy: Vec<Vec<usize>>,
}

impl ExactSolution {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn state_index(&self, x: f64) -> Option<usize> {
        self.states
            .iter()
            .position(|&s| (s - x).abs() <= 1e-12 * s.abs().max(1.0))
    }

    pub fn value(&self, h: usize, x: f64) -> Result<f64> {
        let i = self.state_index(x).ok_or(Error::StateOutsideSpace(x))?;
        Ok(self.values[h][i])
    }

    pub fn optimal_policy(&self) -> TablePolicy {
        TablePolicy {
            states: self.states.clone(),
            actions: self
                .policy
                .iter()
                .map(|row| row.iter().map(|&j| self.actions[j]).collect())
                .collect(),
        }
    }
}

/// `table[i][j]` lists `(index, prob)` pairs of `P(x' | states[i], actions[j])`.
pub(crate) type TransitionTable = Vec<Vec<Vec<(usize, f64)>>>;

/// Transition distributions at stage `t`.
pub(crate) fn transition_table(model: &MdpModel, t: usize) -> Result<TransitionTable> {
    let states = model.states().points().ok_or(Error::NotFinite("exact solution"))?;
    let noise = model.noise().enumerate().ok_or(Error::NoiseNotEnumerable)?;
    states
        .iter()
        .map(|&x| {
            model
                .eval_actions()
                .iter()
                .map(|&a| {
                    let mut dist: Vec<(usize, f64)> = Vec::new();
                    for &(eps, p) in &noise {
                        if p == 0.0 {
                            continue;
                        }
                        let y = model.kernel(t, x, a, eps);
                        let j = model.states().index_of(y).ok_or(Error::StateOutsideSpace(y))?;
                        match dist.iter_mut().find(|(k, _)| *k == j) {
                            Some(entry) => entry.1 += p,
                            None => dist.push((j, p)),
                        }
                    }
                    dist.sort_by_key(|&(j, _)| j);
                    Ok(dist)
                })
                .collect()
        })
        .collect()
}

/// Exact dynamic programming:
/// `V*_H = F`, `V*_h(x) = max_a [R_h(x, a) + sum_x' P(x' | x, a) V*_{h+1}(x')]`.
pub fn solve_exact(model: &MdpModel) -> Result<ExactSolution> {
    let states = model
        .states()
        .points()
        .ok_or(Error::NotFinite("exact solution"))?
        .to_vec();
    let actions = model.eval_actions().to_vec();
    let horizon = model.horizon();

    let mut values = vec![Vec::new(); horizon + 1];
    values[horizon] = states.iter().map(|&x| model.terminal(x)).collect();
    let mut q = vec![Vec::new(); horizon];
    let mut policy = vec![Vec::new(); horizon];

    for h in (0..horizon).rev() {
        let table = transition_table(model, h + 1)?;
        let next = &values[h + 1];
        let q_h: Vec<Vec<f64>> = states
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                actions
                    .iter()
                    .enumerate()
                    .map(|(j, &a)| {
                        let cont = compensated_sum(table[i][j].iter().map(|&(k, p)| p * next[k]));
                        model.reward(h, x, a) + cont
                    })
                    .collect()
            })
            .collect();
        let (v_h, pi_h): (Vec<f64>, Vec<usize>) = q_h.iter().map(|row| argmax_first(row)).map(|(j, v)| (v, j)).unzip();
        values[h] = v_h;
        q[h] = q_h;
        policy[h] = pi_h;
    }

    Ok(ExactSolution {
        states,
        actions,
        values,
        q,
        policy,
    })
}

/// Index and value of the maximum; the lowest index wins ties.
pub(crate) fn argmax_first(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}
