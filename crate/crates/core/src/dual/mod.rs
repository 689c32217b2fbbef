//! Zero-mean penalty families for the pathwise dual problem.
//!
//! Every family here produces, for a decision at stage `t` in state `x`
//! with action `a`, a function of the next noise `eps_{t+1}` whose mean
//! under the noise law is zero. Subtracting it from the pathwise reward
//! keeps the resulting maximization an upper bound for `V*_0`, however
//! poor the fitted coefficients are.

mod exact;
mod interp;
mod noise;
mod score;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{MdpModel, Space};
use crate::primal::PrimalSolution;
use crate::rng::Streams;

pub use exact::{exact_dual_from_oracle, ExactPenalty};
pub use interp::{central_interpolate, covering_radius, max_grid_slope, CoefficientField, GridInterpolant};
pub use noise::{
    build_dual_martingale, estimate_dual_coeffs, estimate_dual_coeffs_grid, population_dual_coeffs, DualMartingale,
    DUAL_SCHEMA_VERSION,
};
pub use score::{fit_score_martingale, ScoreFeatures, ScoreMartingale};

/// Stagewise penalty `xi_{t+1}(x, a, eps)`; `next = K_{t+1}(x, a, eps)`.
pub trait PenaltyFamily: Sync {
    fn penalty(&self, t: usize, x: f64, a: f64, eps: f64, next: f64) -> f64;

    fn label(&self) -> &'static str;

    /// `(x, a)` pairs at which the zero-mean property is audited for stage `t`.
    fn audit_points(&self, _t: usize) -> Vec<(f64, f64)> {
        Vec::new()
    }
}

/// The trivial penalty; the pathwise problem becomes the perfect-information
/// relaxation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPenalty;

impl PenaltyFamily for ZeroPenalty {
    fn penalty(&self, _: usize, _: f64, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }

    fn label(&self) -> &'static str {
        "zero"
    }
}

/// Stagewise value functions used as regression targets.
pub trait ValueSource: Sync {
    fn horizon(&self) -> usize;

    /// Value at stage `h = 0..=H`.
    fn value(&self, h: usize, x: f64) -> f64;

    /// A Lipschitz bound for the stage-`h` value, when known.
    fn lipschitz(&self, _h: usize) -> Option<f64> {
        None
    }
}

impl ValueSource for PrimalSolution {
    fn horizon(&self) -> usize {
        self.model().horizon()
    }

    fn value(&self, h: usize, x: f64) -> f64 {
        PrimalSolution::value(self, h, x)
    }

    fn lipschitz(&self, h: usize) -> Option<f64> {
        Some(self.lipschitz_bound(h))
    }
}

/// A closure `(h, x) -> V_h(x)` posing as a value source.
pub struct FnValues<F> {
    pub horizon: usize,
    pub f: F,
}

impl<F: Fn(usize, f64) -> f64 + Sync> ValueSource for FnValues<F> {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn value(&self, h: usize, x: f64) -> f64 {
        (self.f)(h, x)
    }
}

/// How the interpolation constant of each coefficient function is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LipschitzMode {
    /// `L_V L_K Lambda_E` from the value source and model constants.
    Theoretical,
    Fixed { value: f64 },
    /// Largest pairwise grid slope of each coefficient.
    MaxSlope,
}

/// State grid `S_L`; the action grid is always the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridSpec {
    /// Every state of a finite space.
    Full,
    Uniform { lo: f64, hi: f64, points: usize },
    /// Sorted uniform draws on `[lo, hi]`.
    Random { lo: f64, hi: f64, points: usize, seed: u64 },
}

impl GridSpec {
    pub fn states(&self, model: &MdpModel) -> Result<Vec<f64>> {
        let xs = match self {
            GridSpec::Full => match model.states() {
                Space::Finite { points } => points.clone(),
                Space::Interval { .. } => return Err(Error::NotFinite("full dual grid")),
            },
            GridSpec::Uniform { lo, hi, points } => {
                if *points == 0 || !(lo <= hi) {
                    return Err(Error::EmptyGrid);
                }
                crate::mdp::uniform_grid(*lo, *hi, *points)
            }
            GridSpec::Random { lo, hi, points, seed } => {
                if *points == 0 || !(lo <= hi) {
                    return Err(Error::EmptyGrid);
                }
                let mut rng = Streams::new(*seed).at(0, 0);
                let mut xs: Vec<f64> = (0..*points).map(|_| rng.random_range(*lo..=*hi)).collect();
                xs.sort_by(f64::total_cmp);
                xs
            }
        };
        if let Some(&x) = xs.iter().find(|&&x| !model.states().contains(x)) {
            return Err(Error::StateOutsideSpace(x));
        }
        Ok(xs)
    }

    /// `S_L x A_eval`, state-major.
    pub fn points(&self, model: &MdpModel) -> Result<Vec<(f64, f64)>> {
        let xs = self.states(model)?;
        Ok(xs
            .iter()
            .flat_map(|&x| model.eval_actions().iter().map(move |&a| (x, a)))
            .collect())
    }
}

/// Largest `|E[penalty_{t+1}(x, a, .)]|` over stages and the given points
/// (plus the family's own audit points).
pub fn zero_mean_deviation(
    model: &MdpModel,
    family: &dyn PenaltyFamily,
    points: &[(f64, f64)],
) -> (usize, f64) {
    let mut worst = (0, 0.0f64);
    for t in 0..model.horizon() {
        let mut pts = points.to_vec();
        pts.extend(family.audit_points(t));
        for (x, a) in pts {
            let m = model
                .noise()
                .expect(|e| family.penalty(t, x, a, e, model.kernel(t + 1, x, a, e)))
                .abs();
            if m > worst.1 || m.is_nan() {
                worst = (t, m);
            }
        }
    }
    worst
}

/// Fails with [`Error::NotZeroMean`] when the deviation exceeds `tol`.
pub fn audit_zero_mean(model: &MdpModel, family: &dyn PenaltyFamily, points: &[(f64, f64)], tol: f64) -> Result<f64> {
    let (stage, deviation) = zero_mean_deviation(model, family, points);
    if !(deviation <= tol) {
        return Err(Error::NotZeroMean { stage, deviation });
    }
    Ok(deviation)
}

/// Default audit set: every state of a finite space, otherwise a uniform
/// grid on `[-3, 3]` clipped to the state space, crossed with `A_eval`.
pub fn default_audit_points(model: &MdpModel) -> Vec<(f64, f64)> {
    let xs: Vec<f64> = match model.states() {
        Space::Finite { points } => points.clone(),
        Space::Interval { lo, hi } => crate::mdp::uniform_grid(lo.max(-3.0), hi.min(3.0), 13),
    };
    xs.iter()
        .flat_map(|&x| model.eval_actions().iter().map(move |&a| (x, a)))
        .collect()
}

fn resolve_lipschitz(
    mode: LipschitzMode,
    theoretical: impl FnOnce() -> Option<f64>,
    points: &[(f64, f64)],
    values: &[Vec<f64>],
    k: usize,
    model: &MdpModel,
) -> Result<Vec<f64>> {
    match mode {
        LipschitzMode::Fixed { value } => Ok(vec![value; k]),
        LipschitzMode::Theoretical => {
            let l = theoretical()
                .filter(|l| *l > 0.0 && l.is_finite())
                .ok_or_else(|| {
                    Error::invalid(
                        "no positive theoretical interpolation constant (declare Lipschitz constants or use max-slope)",
                    )
                })?;
            Ok(vec![l; k])
        }
        LipschitzMode::MaxSlope => Ok((0..k)
            .map(|j| {
                let col: Vec<f64> = values.iter().map(|v| v[j]).collect();
                max_grid_slope(points, &col, model.metric()).max(f64::EPSILON)
            })
            .collect()),
    }
}

#[cfg(test)]
mod tests;
