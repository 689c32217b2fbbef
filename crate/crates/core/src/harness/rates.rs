//! Error-versus-sample-size tables for the primal regression and the dual
//! coefficient estimates.

use serde::{Deserialize, Serialize};

use crate::basis::{NoiseBasis, ReferenceMeasure, StateBasis};
use crate::dual::{estimate_dual_coeffs_grid, population_dual_coeffs, ValueSource};
use crate::error::{Error, Result};
use crate::mdp::MdpModel;
use crate::numeric::{compensated_sum, NormalQuadrature};
use crate::primal::{backward_pass, PrimalOptions};
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    /// Sample size (`N` or `M`).
    pub n: usize,
    /// Root mean square over replications.
    pub error: f64,
}

/// `E_{mu_h}[f]`: 64-node Gauss-Hermite for a Gaussian schedule, an exact
/// sum on a finite reference.
pub fn reference_expect(mu: &ReferenceMeasure, h: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    match mu {
        ReferenceMeasure::GaussianSchedule { .. } => {
            let (m, s) = (mu.mean(h), mu.std(h));
            NormalQuadrature::standard().expect(|z| f(m + s * z))
        }
        ReferenceMeasure::Finite { atoms, probs, .. } => {
            compensated_sum(atoms.iter().zip(probs).map(|(&x, &p)| p * f(x)))
        }
    }
}

fn run_seed(seed: u64, n: usize, rep: usize) -> u64 {
    Streams::derive_seed(Streams::derive_seed(seed, n as u64), rep as u64)
}

fn check_ladder(ns: &[usize], reps: usize) -> Result<()> {
    if ns.is_empty() || ns.contains(&0) || reps == 0 {
        return Err(Error::invalid("rate tables need a non-empty ladder of positive sizes and reps >= 1"));
    }
    Ok(())
}

/// `||V*_h - V_{h,N}||_{L2(mu_h)}` for each `N`, RMS over `reps` independent
/// backward passes.
#[allow(clippy::too_many_arguments)]
pub fn primal_l2_errors(
    model: &MdpModel,
    basis: &StateBasis,
    mu: &ReferenceMeasure,
    h: usize,
    oracle: &dyn Fn(f64) -> f64,
    ns: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<RateRow>> {
    check_ladder(ns, reps)?;
    if h >= model.horizon() {
        return Err(Error::StageOutOfRange {
            stage: h,
            horizon: model.horizon() - 1,
        });
    }
    // oracle values at the quadrature nodes
    let mut truth = Vec::new();
    reference_expect(mu, h, |x| {
        truth.push((x, oracle(x)));
        0.0
    });
    ns.iter()
        .map(|&n| {
            let mut sq = Vec::with_capacity(reps);
            for r in 0..reps {
                let opts = PrimalOptions {
                    samples: n,
                    final_stage_mc: None,
                };
                let sol = backward_pass(model, basis, mu, opts, run_seed(seed, n, r))?;
                let mut it = truth.iter();
                sq.push(reference_expect(mu, h, |x| {
                    let (_, v) = it.next().copied().unwrap_or((x, f64::NAN));
                    let d = v - sol.value(h, x);
                    d * d
                }));
            }
            Ok(RateRow {
                n,
                error: (compensated_sum(sq.iter().copied()) / reps as f64).sqrt(),
            })
        })
        .collect()
}

/// `max_{t, grid, k} |c_{K,M} - c_K|` for each `M`, RMS over `reps`
/// independent noise blocks; `c_K` by exact sum or quadrature.
pub fn dual_coefficient_errors(
    model: &MdpModel,
    values: &dyn ValueSource,
    basis: &NoiseBasis,
    points: &[(f64, f64)],
    ms: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<RateRow>> {
    check_ladder(ms, reps)?;
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let horizon = model.horizon();
    let population: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|t| {
            let v = |y: f64| values.value(t + 1, y);
            points
                .iter()
                .map(|&(x, a)| population_dual_coeffs(model, &v, basis, x, a, t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    ms.iter()
        .map(|&m| {
            let mut sq = Vec::with_capacity(reps);
            for r in 0..reps {
                let s = run_seed(seed, m, r);
                let mut worst: f64 = 0.0;
                for (t, pop) in population.iter().enumerate() {
                    let v = |y: f64| values.value(t + 1, y);
                    let est = estimate_dual_coeffs_grid(model, &v, basis, points, t, m, s)?;
                    for (e, p) in est.iter().zip(pop) {
                        for (a, b) in e.iter().zip(p) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                }
                sq.push(worst * worst);
            }
            Ok(RateRow {
                n: m,
                error: (compensated_sum(sq.iter().copied()) / reps as f64).sqrt(),
            })
        })
        .collect()
}
