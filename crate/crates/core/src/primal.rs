//! Backward pseudo-regression.
//!
//! At stage `h` a single block of pairs `(X_i, eps_i)`, `X_i ~ mu_h`, is
//! drawn and shared by every evaluation action. The continuation of action
//! `a` is approximated by `beta_a . gamma_K(x)` with
//!
//! ```text
//! beta_a = (1/N) sum_i V_{h+1,N}(K_{h+1}(X_i, a, eps_i)) Sigma^{-1} gamma_K(X_i)
//! ```
//!
//! clipped at `(H - h) r_max`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{ReferenceMeasure, StateBasis};
use crate::error::{Error, Result};
use crate::mdp::{MdpModel, Policy};
use crate::numeric::CompensatedSum;
use crate::rng::Streams;

/// Samples per reduction chunk. Chunk boundaries do not depend on the
/// thread count, so the reduction order is fixed.
const CHUNK: usize = 512;

/// `max(-level, min(level, v))`.
pub fn clip(v: f64, level: f64) -> Result<f64> {
    if !(level >= 0.0) {
        return Err(Error::invalid(format!("clipping level must be non-negative, got {level}")));
    }
    Ok(v.clamp(-level, level))
}

/// Stage-`h` regression output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionEstimate {
    pub stage: usize,
    /// `L~_{h+1} = (H - h) r_max`.
    pub level: f64,
    pub actions: Vec<f64>,
    /// `beta[j]` belongs to `actions[j]`.
    pub beta: Vec<Vec<f64>>,
    /// Plain Monte Carlo continuation at a single anchor state, used in
    /// place of the regression there.
    pub anchor: Option<Anchor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub state: f64,
    pub continuation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimalOptions {
    /// Regression sample count `N` per stage.
    pub samples: usize,
    /// Estimate the stage-0 continuation at this state by plain Monte
    /// Carlo over the same noise draws instead of by regression.
    pub final_stage_mc: Option<f64>,
}

/// Clipped estimates `V_{h,N}` for all stages, `V_{H,N} = F`.
#[derive(Debug, Clone)]
pub struct PrimalSolution {
    model: MdpModel,
    basis: StateBasis,
    mu: ReferenceMeasure,
    stages: Vec<ValueFunctionEstimate>,
}

/// Per-stage diagnostic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub stage: usize,
    pub level: f64,
    /// Euclidean norm of `beta_a`, per evaluation action.
    pub coefficient_norms: Vec<f64>,
    /// Fraction of `(sample, action)` pairs where the clip is active.
    pub clipping_rate: f64,
}

fn check_setup(model: &MdpModel, basis: &StateBasis, mu: &ReferenceMeasure, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("sample count N must be at least 1"));
    }
    basis.check_compatible(mu)?;
    if let ReferenceMeasure::Finite { atoms, .. } = mu {
        if let Some(&x) = atoms.iter().find(|&&x| !model.states().contains(x)) {
            return Err(Error::StateOutsideSpace(x));
        }
    }
    Ok(())
}

/// Draws pair `i` of the stage-`h` block.
fn draw_pair(streams: &Streams, model: &MdpModel, mu: &ReferenceMeasure, h: usize, i: usize, n: usize) -> (f64, f64) {
    let mut rng = streams.at(i as u64, h as u64);
    let x = mu.sample_in_block(h, i, n, &mut rng);
    let eps = model.noise().sample(&mut rng);
    (x, eps)
}

/// `beta_{N,a}` for every action in `actions`, all from one sample block.
#[allow(clippy::too_many_arguments)]
pub fn estimate_betas(
    basis: &StateBasis,
    mu: &ReferenceMeasure,
    h: usize,
    model: &MdpModel,
    v_next: &(dyn Fn(f64) -> f64 + Sync),
    actions: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_setup(model, basis, mu, n)?;
    if h >= model.horizon() {
        return Err(Error::StageOutOfRange {
            stage: h + 1,
            horizon: model.horizon(),
        });
    }
    if let Some(&a) = actions.iter().find(|&&a| !model.actions().contains(a)) {
        return Err(Error::ActionOutsideSpace(a));
    }
    let k = basis.len();
    let na = actions.len();
    let streams = Streams::new(seed);
    let chunks: Vec<Vec<CompensatedSum>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![CompensatedSum::default(); na * k];
            let mut g = vec![0.0; k];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let (x, eps) = draw_pair(&streams, model, mu, h, i, n);
                basis.evaluate(mu, h, x, &mut g);
                basis.sigma_inverse_apply(&mut g);
                for (j, &a) in actions.iter().enumerate() {
                    let z = v_next(model.kernel(h + 1, x, a, eps));
                    for (slot, gk) in acc[j * k..(j + 1) * k].iter_mut().zip(&g) {
                        slot.add(z * gk);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![CompensatedSum::default(); na * k];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    Ok(total
        .chunks(k)
        .map(|row| row.iter().map(|s| s.value() / n as f64).collect())
        .collect())
}

/// `beta_{N,a}` for a single action; replaying the seed reproduces the
/// block used for every other action at the same stage.
#[allow(clippy::too_many_arguments)]
pub fn estimate_beta(
    basis: &StateBasis,
    mu: &ReferenceMeasure,
    h: usize,
    model: &MdpModel,
    v_next: &(dyn Fn(f64) -> f64 + Sync),
    a: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(estimate_betas(basis, mu, h, model, v_next, &[a], n, seed)?.remove(0))
}

/// Runs the backward recursion from `V_{H,N} = F` down to stage 0.
pub fn backward_pass(
    model: &MdpModel,
    basis: &StateBasis,
    mu: &ReferenceMeasure,
    opts: PrimalOptions,
    seed: u64,
) -> Result<PrimalSolution> {
    check_setup(model, basis, mu, opts.samples)?;
    let horizon = model.horizon();
    let mut sol = PrimalSolution {
        model: model.clone(),
        basis: basis.clone(),
        mu: mu.clone(),
        stages: Vec::with_capacity(horizon),
    };
    let actions = model.eval_actions().to_vec();
    // stages are filled from the back; keep them in a reversed buffer
    let mut rev: Vec<ValueFunctionEstimate> = Vec::with_capacity(horizon);
    for h in (0..horizon).rev() {
        sol.stages = rev.iter().rev().cloned().collect();
        let offset = h + 1;
        let v_next = |y: f64| sol.value_from(offset, y);
        let beta = estimate_betas(basis, mu, h, model, &v_next, &actions, opts.samples, seed)?;
        let anchor = match opts.final_stage_mc {
            Some(x0) if h == 0 => Some(anchor_continuation(model, &sol, x0, &actions, opts.samples, seed)?),
            _ => None,
        };
        rev.push(ValueFunctionEstimate {
            stage: h,
            level: (horizon - h) as f64 * model.r_max(),
            actions: actions.clone(),
            beta,
            anchor,
        });
    }
    rev.reverse();
    sol.stages = rev;
    Ok(sol)
}

fn anchor_continuation(
    model: &MdpModel,
    sol: &PrimalSolution,
    x0: f64,
    actions: &[f64],
    n: usize,
    seed: u64,
) -> Result<Anchor> {
    if !model.states().contains(x0) {
        return Err(Error::StateOutsideSpace(x0));
    }
    let streams = Streams::new(seed);
    let continuation = actions
        .iter()
        .map(|&a| {
            let vals: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let (_, eps) = draw_pair(&streams, model, &sol.mu, 0, i, n);
                    sol.value_from(1, model.kernel(1, x0, a, eps))
                })
                .collect();
            crate::numeric::compensated_sum(vals) / n as f64
        })
        .collect();
    Ok(Anchor {
        state: x0,
        continuation,
    })
}

impl PrimalSolution {
    /// Wraps externally supplied coefficients (e.g. untrained ones).
    pub fn from_coefficients(
        model: &MdpModel,
        basis: &StateBasis,
        mu: &ReferenceMeasure,
        beta: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        basis.check_compatible(mu)?;
        let horizon = model.horizon();
        let actions = model.eval_actions().to_vec();
        if beta.len() != horizon
            || beta
                .iter()
                .any(|st| st.len() != actions.len() || st.iter().any(|b| b.len() != basis.len()))
        {
            return Err(Error::invalid("coefficient table must be H x |A_eval| x K"));
        }
        let stages = beta
            .into_iter()
            .enumerate()
            .map(|(h, beta)| ValueFunctionEstimate {
                stage: h,
                level: (horizon - h) as f64 * model.r_max(),
                actions: actions.clone(),
                beta,
                anchor: None,
            })
            .collect();
        Ok(Self {
            model: model.clone(),
            basis: basis.clone(),
            mu: mu.clone(),
            stages,
        })
    }

    pub fn model(&self) -> &MdpModel {
        &self.model
    }

    pub fn basis(&self) -> &StateBasis {
        &self.basis
    }

    pub fn reference(&self) -> &ReferenceMeasure {
        &self.mu
    }

    pub fn stages(&self) -> &[ValueFunctionEstimate] {
        &self.stages
    }

    /// `stages` may be partially filled during the backward pass; this
    /// evaluates stage `h` relative to the filled suffix.
    fn value_from(&self, h: usize, x: f64) -> f64 {
        let horizon = self.model.horizon();
        if h == horizon {
            return self.model.terminal(x);
        }
        let skip = horizon - self.stages.len();
        let est = &self.stages[h - skip];
        self.best(est, x).1
    }

    fn continuation(&self, est: &ValueFunctionEstimate, j: usize, x: f64, g: &[f64]) -> f64 {
        if let Some(anchor) = &est.anchor {
            if anchor.state == x {
                return anchor.continuation[j].clamp(-est.level, est.level);
            }
        }
        let raw: f64 = est.beta[j].iter().zip(g).map(|(b, g)| b * g).sum();
        raw.clamp(-est.level, est.level)
    }

    fn best(&self, est: &ValueFunctionEstimate, x: f64) -> (usize, f64) {
        let mut g = vec![0.0; self.basis.len()];
        self.basis.evaluate(&self.mu, est.stage, x, &mut g);
        let mut best = (0, f64::NEG_INFINITY);
        for (j, &a) in est.actions.iter().enumerate() {
            let q = self.model.reward(est.stage, x, a) + self.continuation(est, j, x, &g);
            if q > best.1 {
                best = (j, q);
            }
        }
        best
    }

    /// `V_{h,N}(x)`, `h = 0..=H`.
    pub fn value(&self, h: usize, x: f64) -> f64 {
        self.value_from(h, x)
    }

    /// `R_h(x, a_j) + clip(beta_{a_j} . gamma(x))` for every evaluation action.
    pub fn q_values(&self, h: usize, x: f64) -> Vec<f64> {
        let est = &self.stages[h];
        let mut g = vec![0.0; self.basis.len()];
        self.basis.evaluate(&self.mu, h, x, &mut g);
        est.actions
            .iter()
            .enumerate()
            .map(|(j, &a)| self.model.reward(h, x, a) + self.continuation(est, j, x, &g))
            .collect()
    }

    /// `pi_{h,N}(x)`: greedy action, lowest index on ties.
    pub fn greedy_action(&self, h: usize, x: f64) -> f64 {
        let est = &self.stages[h];
        est.actions[self.best(est, x).0]
    }

    /// `L_R + L~_{h+1} Lambda_K sqrt(K) L_{gamma,K}`: Lipschitz bound for `V_{h,N}`.
    pub fn lipschitz_bound(&self, h: usize) -> f64 {
        if h == self.model.horizon() {
            return self.model.lipschitz().reward;
        }
        let est = &self.stages[h];
        self.model.lipschitz().reward
            + est.level
                * self.basis.lambda_bound()
                * (self.basis.len() as f64).sqrt()
                * self.basis.lipschitz_bound(&self.mu, h)
    }

    /// Coefficient norms, and clip activation rates over a fresh replay of
    /// each stage's sample block (`seed` and `n` as used in the pass).
    pub fn diagnostics(&self, n: usize, seed: u64) -> Vec<StageDiagnostics> {
        let streams = Streams::new(seed);
        let k = self.basis.len();
        self.stages
            .iter()
            .map(|est| {
                let active: usize = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let (x, _) = draw_pair(&streams, &self.model, &self.mu, est.stage, i, n);
                        let mut g = vec![0.0; k];
                        self.basis.evaluate(&self.mu, est.stage, x, &mut g);
                        est.beta
                            .iter()
                            .filter(|b| b.iter().zip(&g).map(|(b, g)| b * g).sum::<f64>().abs() > est.level)
                            .count()
                    })
                    .sum();
                StageDiagnostics {
                    stage: est.stage,
                    level: est.level,
                    coefficient_norms: est
                        .beta
                        .iter()
                        .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
                        .collect(),
                    clipping_rate: if n == 0 {
                        0.0
                    } else {
                        active as f64 / (n * est.actions.len()) as f64
                    },
                }
            })
            .collect()
    }
}

/// The greedy policy `pi_{h,N}` induced by a primal solution.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a>(&'a PrimalSolution);

pub fn greedy_policy(estimates: &PrimalSolution) -> GreedyPolicy<'_> {
    GreedyPolicy(estimates)
}

impl Policy for GreedyPolicy<'_> {
    fn action(&self, stage: usize, state: f64) -> f64 {
        self.0.greedy_action(stage, state)
    }
}
