use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MdpModel;
use crate::error::{Error, Result};
use crate::numeric::mean_and_std_err;
use crate::rng::Streams;

/// Deterministic Markov policy `pi_h : S -> A`, `h = 0..H-1`.
pub trait Policy: Sync {
    fn action(&self, stage: usize, state: f64) -> f64;
}

impl<F> Policy for F
where
    F: Fn(usize, f64) -> f64 + Sync,
{
    fn action(&self, stage: usize, state: f64) -> f64 {
        self(stage, state)
    }
}

/// Lookup-table policy on a finite state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePolicy {
    pub states: Vec<f64>,
    /// `actions[h][i]` is the action taken in `states[i]` at stage `h`.
    pub actions: Vec<Vec<f64>>,
}

impl Policy for TablePolicy {
    fn action(&self, stage: usize, state: f64) -> f64 {
        let i = self
            .states
            .iter()
            .position(|&s| (s - state).abs() <= 1e-12 * s.abs().max(1.0))
            .unwrap_or_else(|| panic!("state {state} not in policy table"));
        self.actions[stage][i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Monte Carlo estimate of `V^pi_0(x0) = E[sum_t R_t(S_t, A_t) + F(S_H)]`.
///
/// Path `n` draws its stage-`t` noise from stream `(seed, n, t)`, so the
/// result does not depend on the number of worker threads.
pub fn evaluate_policy_mc(
    model: &MdpModel,
    policy: &dyn Policy,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    if !model.states().contains(x0) {
        return Err(Error::StateOutsideSpace(x0));
    }
    let streams = Streams::new(seed);
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|n| {
            let mut x = x0;
            let mut total = 0.0;
            for t in 0..model.horizon() {
                let a = policy.action(t, x);
                if !model.actions().contains(a) {
                    return Err(Error::ActionOutsideSpace(a));
                }
                total += model.reward(t, x, a);
                let eps = model.noise().sample(&mut streams.at(n, t as u64 + 1));
                x = model.kernel(t + 1, x, a, eps);
            }
            Ok(total + model.terminal(x))
        })
        .collect::<Result<_>>()?;
    let (mean, std_err) = mean_and_std_err(&values);
    Ok(McEstimate { mean, std_err })
}
