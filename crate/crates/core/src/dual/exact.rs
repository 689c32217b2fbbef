use super::PenaltyFamily;
use crate::error::{Error, Result};
use crate::mdp::{ExactSolution, MdpModel};
use crate::numeric::compensated_sum;

/// The optimal penalty
/// `xi*_{t+1}(x, a, eps) = V*_{t+1}(K(x, a, eps)) - sum_eps' P(eps') V*_{t+1}(K(x, a, eps'))`.
#[derive(Debug, Clone)]
pub struct ExactPenalty {
    states: Vec<f64>,
    actions: Vec<f64>,
    /// `next_values[t][i] = V*_{t+1}(states[i])`.
    next_values: Vec<Vec<f64>>,
    /// `cond_mean[t][i][j] = E[V*_{t+1}(K_{t+1}(states[i], actions[j], eps))]`.
    cond_mean: Vec<Vec<Vec<f64>>>,
}

pub fn exact_dual_from_oracle(model: &MdpModel, exact: &ExactSolution) -> Result<ExactPenalty> {
    let noise = model.noise().enumerate().ok_or(Error::NoiseNotEnumerable)?;
    let states = model.states().points().ok_or(Error::NotFinite("exact penalty"))?.to_vec();
    if states != exact.states || model.horizon() != exact.horizon() {
        return Err(Error::invalid("exact solution was computed for a different model"));
    }
    let actions = model.eval_actions().to_vec();
    let horizon = model.horizon();
    let mut cond_mean = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let v = &exact.values[t + 1];
        let table = states
            .iter()
            .map(|&x| {
                actions
                    .iter()
                    .map(|&a| {
                        let terms = noise
                            .iter()
                            .map(|&(e, p)| {
                                let y = model.kernel(t + 1, x, a, e);
                                let i = model.states().index_of(y).ok_or(Error::StateOutsideSpace(y))?;
                                Ok(p * v[i])
                            })
                            .collect::<Result<Vec<f64>>>()?;
                        Ok(compensated_sum(terms))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        cond_mean.push(table);
    }
    Ok(ExactPenalty {
        states,
        actions,
        next_values: exact.values[1..].to_vec(),
        cond_mean,
    })
}

impl ExactPenalty {
    fn state_index(&self, x: f64) -> usize {
        self.states
            .iter()
            .position(|&s| (s - x).abs() <= 1e-12 * s.abs().max(1.0))
            .unwrap_or_else(|| panic!("state {x} not in the exact penalty table"))
    }

    fn action_index(&self, a: f64) -> usize {
        self.actions
            .iter()
            .position(|&s| s == a)
            .unwrap_or_else(|| panic!("action {a} not in the exact penalty table"))
    }
}

impl PenaltyFamily for ExactPenalty {
    fn penalty(&self, t: usize, x: f64, a: f64, _eps: f64, next: f64) -> f64 {
        let i = self.state_index(x);
        let j = self.action_index(a);
        self.next_values[t][self.state_index(next)] - self.cond_mean[t][i][j]
    }

    fn label(&self) -> &'static str {
        "exact"
    }

    fn audit_points(&self, _t: usize) -> Vec<(f64, f64)> {
        self.states
            .iter()
            .flat_map(|&x| self.actions.iter().map(move |&a| (x, a)))
            .collect()
    }
}
