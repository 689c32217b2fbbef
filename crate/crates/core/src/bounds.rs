//! Upper and lower Monte Carlo estimates of `V*_0(x0)`.
//!
//! The upper estimate averages, over independent noise sequences, the
//! pathwise maximum over all action sequences of
//! `sum_t [R_t(S_t, a_t) - xi_{t+1}(S_t, a_t, eps_{t+1})] + F(S_H)`,
//! with states rolled forward along the fixed noise. The lower estimate is
//! the Monte Carlo value of the greedy policy of a primal solution.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{NoiseBasis, ReferenceMeasure, StateBasis};
use crate::dual::{
    audit_zero_mean, build_dual_martingale, default_audit_points, exact_dual_from_oracle, fit_score_martingale,
    GridSpec, LipschitzMode, PenaltyFamily, ScoreFeatures, ZeroPenalty,
};
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy_mc, McEstimate, MdpModel};
use crate::numeric::mean_and_std_err;
use crate::primal::{backward_pass, greedy_policy, PrimalOptions, PrimalSolution};
use crate::rng::Streams;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Default bound on the number of nodes in the pathwise action tree.
pub const DEFAULT_NODE_CAP: u128 = 1_000_000;

/// Tolerance of the zero-mean audit run before every upper bound.
pub const ZERO_MEAN_TOL: f64 = 1e-8;

/// One fixed noise sequence and a penalty family.
pub struct PathwiseProblem<'a> {
    pub model: &'a MdpModel,
    pub family: &'a dyn PenaltyFamily,
    /// `eps_1..eps_H`.
    pub noise: &'a [f64],
    pub x0: f64,
    pub node_cap: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseSolution {
    pub value: f64,
    pub path: Vec<f64>,
}

/// Nodes in the full action tree, `sum_{t=0..H} |A|^t`.
pub fn tree_size(actions: usize, horizon: usize) -> u128 {
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=horizon {
        total = total.saturating_add(level);
        level = level.saturating_mul(actions as u128);
    }
    total
}

/// Exhaustive depth-first maximization over `A_eval^H`; the first maximizer
/// in lexicographic order wins ties.
pub fn pathwise_sup(problem: &PathwiseProblem<'_>) -> Result<PathwiseSolution> {
    let model = problem.model;
    let horizon = model.horizon();
    if problem.noise.len() != horizon {
        return Err(Error::invalid(format!(
            "noise sequence has length {}, horizon is {horizon}",
            problem.noise.len()
        )));
    }
    if !model.states().contains(problem.x0) {
        return Err(Error::StateOutsideSpace(problem.x0));
    }
    let nodes = tree_size(model.eval_actions().len(), horizon);
    if nodes > problem.node_cap {
        return Err(Error::NodeCapExceeded {
            nodes,
            cap: problem.node_cap,
        });
    }
    let mut path = vec![0.0; horizon];
    let mut best_path = vec![0.0; horizon];
    let mut best = f64::NEG_INFINITY;
    dfs(problem, 0, problem.x0, 0.0, &mut path, &mut best, &mut best_path);
    Ok(PathwiseSolution {
        value: best,
        path: best_path,
    })
}

fn dfs(
    p: &PathwiseProblem<'_>,
    t: usize,
    x: f64,
    acc: f64,
    path: &mut Vec<f64>,
    best: &mut f64,
    best_path: &mut Vec<f64>,
) {
    let model = p.model;
    if t == model.horizon() {
        let v = acc + model.terminal(x);
        if v > *best {
            *best = v;
            best_path.copy_from_slice(path);
        }
        return;
    }
    let eps = p.noise[t];
    for &a in model.eval_actions() {
        let y = model.kernel(t + 1, x, a, eps);
        let gain = model.reward(t, x, a) - p.family.penalty(t, x, a, eps, y);
        path[t] = a;
        dfs(p, t + 1, y, acc + gain, path, best, best_path);
    }
}

/// Noise sequence `n`: `eps_t` from stream `(seed, n, t)`, `t = 1..H`.
pub fn noise_sequence(model: &MdpModel, n: u64, seed: u64) -> Vec<f64> {
    let streams = Streams::new(seed);
    (1..=model.horizon() as u64)
        .map(|t| model.noise().sample(&mut streams.at(n, t)))
        .collect()
}

/// Pathwise values for `n_test` independent noise sequences, in path order.
pub fn pathwise_values(
    model: &MdpModel,
    family: &dyn PenaltyFamily,
    x0: f64,
    n_test: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_test == 0 {
        return Err(Error::invalid("N_test must be at least 1"));
    }
    (0..n_test as u64)
        .into_par_iter()
        .map(|n| {
            let noise = noise_sequence(model, n, seed);
            pathwise_sup(&PathwiseProblem {
                model,
                family,
                noise: &noise,
                x0,
                node_cap: DEFAULT_NODE_CAP,
            })
            .map(|s| s.value)
        })
        .collect()
}

/// Mean and standard error of the pathwise values; an upper-biased estimate
/// of `V*_0(x0)` once the family passes the zero-mean audit.
pub fn upper_bound(
    model: &MdpModel,
    family: &dyn PenaltyFamily,
    x0: f64,
    n_test: usize,
    seed: u64,
) -> Result<McEstimate> {
    audit_zero_mean(model, family, &default_audit_points(model), ZERO_MEAN_TOL)?;
    let values = pathwise_values(model, family, x0, n_test, seed)?;
    let (mean, std_err) = mean_and_std_err(&values);
    Ok(McEstimate { mean, std_err })
}

/// Monte Carlo value of the greedy policy of `estimates`.
pub fn lower_bound(
    model: &MdpModel,
    estimates: &PrimalSolution,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    evaluate_policy_mc(model, &greedy_policy(estimates), x0, n_paths, seed)
}

/// Which penalty family the experiment fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PenaltySpec {
    /// Noise-basis martingale with `size` basis functions (`K_pr`).
    NoiseBasis { size: usize },
    Score { harmonics: usize },
    /// The oracle penalty; finite models with enumerable noise only.
    Exact,
    Zero,
}

/// Everything a duality-gap run needs.
#[derive(Debug, Clone)]
pub struct GapExperiment {
    pub testbed: String,
    pub fingerprint: String,
    pub model: MdpModel,
    pub x0: f64,
    pub oracle: Option<f64>,
    pub state_basis: StateBasis,
    pub reference: ReferenceMeasure,
    pub primal: PrimalOptions,
    pub penalty: PenaltySpec,
    pub grid: GridSpec,
    pub inner_samples: usize,
    pub lipschitz: LipschitzMode,
    pub n_test: usize,
    pub n_lower: usize,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub primal: u64,
    pub dual: u64,
    pub test: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Regression samples `N`.
    pub n: usize,
    /// Inner samples `M`.
    pub m: usize,
    /// State basis size `K`.
    pub k: usize,
    /// Penalty basis size `K_pr` (0 for the zero and exact penalties).
    pub k_pr: usize,
    /// Dual grid size `L = |S_L x A_eval|`.
    pub l: usize,
    pub n_test: usize,
    pub n_lower: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub testbed: String,
    pub fingerprint: String,
    pub x0: f64,
    pub penalty: String,
    pub lower: McEstimate,
    pub upper: McEstimate,
    pub oracle: Option<f64>,
    pub gap: f64,
    pub zero_mean_deviation: f64,
    pub parameters: Parameters,
    pub seeds: Seeds,
}

impl BoundReport {
    /// `lower - 4 se <= oracle <= upper + 4 se`, when an oracle is known.
    pub fn sandwich_holds(&self) -> Option<bool> {
        self.oracle.map(|v| {
            self.lower.mean - 4.0 * self.lower.std_err <= v && v <= self.upper.mean + 4.0 * self.upper.std_err
        })
    }
}

/// Wall-clock seconds per stage; kept out of the report so that reports
/// stay byte-reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub primal: f64,
    pub dual: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Fits a penalty family of the requested kind.
pub fn build_penalty(exp: &GapExperiment, primal: &PrimalSolution) -> Result<Box<dyn PenaltyFamily>> {
    let model = &exp.model;
    if model.noise().is_degenerate() {
        // no non-constant zero-mean function of the noise exists
        return Ok(Box::new(ZeroPenalty));
    }
    Ok(match &exp.penalty {
        PenaltySpec::NoiseBasis { size } => {
            let basis = NoiseBasis::for_law(model.noise(), *size)?;
            Box::new(build_dual_martingale(
                model,
                primal,
                &basis,
                &exp.grid,
                exp.inner_samples,
                exp.lipschitz,
                exp.seeds.dual,
            )?)
        }
        PenaltySpec::Score { harmonics } => Box::new(fit_score_martingale(
            model,
            primal,
            ScoreFeatures { harmonics: *harmonics },
            &exp.grid,
            exp.inner_samples,
            exp.lipschitz,
            exp.seeds.dual,
        )?),
        PenaltySpec::Exact => {
            let exact = crate::mdp::solve_exact(model)?;
            Box::new(exact_dual_from_oracle(model, &exact)?)
        }
        PenaltySpec::Zero => Box::new(ZeroPenalty),
    })
}

/// Primal pass, penalty fit, then lower and upper estimates on independent
/// seeds.
pub fn duality_gap_experiment(exp: &GapExperiment) -> Result<(BoundReport, Timing)> {
    let mut timing = Timing::default();
    let clock = Instant::now();
    let primal = backward_pass(&exp.model, &exp.state_basis, &exp.reference, exp.primal, exp.seeds.primal)
        .map_err(Error::in_stage("primal"))?;
    timing.primal = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let family = build_penalty(exp, &primal).map_err(Error::in_stage("dual"))?;
    let zero_mean_deviation = audit_zero_mean(&exp.model, family.as_ref(), &default_audit_points(&exp.model), ZERO_MEAN_TOL)
        .map_err(Error::in_stage("dual"))?;
    timing.dual = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let lower = lower_bound(&exp.model, &primal, exp.x0, exp.n_lower, exp.seeds.test).map_err(Error::in_stage("lower"))?;
    timing.lower = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let upper_seed = Streams::derive_seed(exp.seeds.test, 1);
    let upper =
        upper_bound(&exp.model, family.as_ref(), exp.x0, exp.n_test, upper_seed).map_err(Error::in_stage("upper"))?;
    timing.upper = clock.elapsed().as_secs_f64();

    let (k_pr, l) = match (&exp.penalty, family.label()) {
        (_, "zero") | (_, "exact") => (0, 0),
        (PenaltySpec::NoiseBasis { size }, _) => (*size, exp.grid.points(&exp.model)?.len()),
        (PenaltySpec::Score { harmonics }, _) => (1 + 2 * harmonics, exp.grid.points(&exp.model)?.len()),
        _ => (0, 0),
    };
    let report = BoundReport {
        schema_version: REPORT_SCHEMA_VERSION,
        testbed: exp.testbed.clone(),
        fingerprint: exp.fingerprint.clone(),
        x0: exp.x0,
        penalty: family.label().to_string(),
        lower,
        upper,
        oracle: exp.oracle,
        gap: upper.mean - lower.mean,
        zero_mean_deviation,
        parameters: Parameters {
            n: exp.primal.samples,
            m: exp.inner_samples,
            k: exp.state_basis.len(),
            k_pr,
            l,
            n_test: exp.n_test,
            n_lower: exp.n_lower,
        },
        seeds: exp.seeds,
    };
    Ok((report, timing))
}

#[cfg(test)]
mod tests;
