//! Empirical check of uniform-in-parameter mean estimation: for a family
//! `f(theta, xi)`, `xi ~ N(0, 1)`, the worst error over a parameter grid of
//! the empirical mean built from one shared sample.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProbeFamily {
    /// `f(theta, xi) = theta xi`; every true mean is 0.
    Linear,
    /// `f = c`.
    Constant { value: f64 },
    /// `f(theta, xi) = max(xi - theta, 0)`, true mean
    /// `phi(theta) - theta (1 - Phi(theta))`.
    Call,
}

impl ProbeFamily {
    pub fn eval(&self, theta: f64, xi: f64) -> f64 {
        match self {
            ProbeFamily::Linear => theta * xi,
            ProbeFamily::Constant { value } => *value,
            ProbeFamily::Call => (xi - theta).max(0.0),
        }
    }

    pub fn true_mean(&self, theta: f64) -> f64 {
        match self {
            ProbeFamily::Linear => 0.0,
            ProbeFamily::Constant { value } => *value,
            ProbeFamily::Call => {
                let pdf = (-0.5 * theta * theta).exp() / (2.0 * std::f64::consts::PI).sqrt();
                pdf - theta * 0.5 * libm::erfc(theta / std::f64::consts::SQRT_2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    /// Root mean square over replications of `sup_theta |mean_N - mean|`.
    pub sup_error: f64,
}

/// For each `N`, the RMS over `reps` replications of the largest error of
/// the empirical means over `params`, all parameters sharing one sample.
pub fn uniform_error_probe(
    family: ProbeFamily,
    params: &[f64],
    ns: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<ProbeRow>> {
    if params.is_empty() || ns.is_empty() || reps == 0 || ns.contains(&0) {
        return Err(Error::invalid("probe needs parameters, a non-empty ladder of positive N and reps >= 1"));
    }
    let streams = Streams::new(seed);
    Ok(ns
        .iter()
        .map(|&n| {
            let sq: Vec<f64> = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = streams.at(r, n as u64);
                    let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let sup = params
                        .iter()
                        .map(|&th| {
                            let m = compensated_sum(xi.iter().map(|&x| family.eval(th, x))) / n as f64;
                            (m - family.true_mean(th)).abs()
                        })
                        .fold(0.0, f64::max);
                    sup * sup
                })
                .collect();
            ProbeRow {
                n,
                sup_error: (compensated_sum(sq) / reps as f64).sqrt(),
            }
        })
        .collect())
}
