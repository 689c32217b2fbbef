//! Shipped testbeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionSpace, GaussianKernel, MdpModel, NoiseLaw, Space};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestbedId {
    /// Three-state, two-action chain with two-point noise.
    T1,
    /// One-dimensional controlled Gaussian walk with clipped quadratic rewards.
    T2,
    /// Deterministic chain (noise degenerate at zero).
    T3,
    /// Two-state, two-action model with two-point noise.
    TwoState,
}

impl TestbedId {
    pub fn is_finite(self) -> bool {
        !matches!(self, TestbedId::T2)
    }
}

impl std::fmt::Display for TestbedId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestbedId::T1 => "t1",
            TestbedId::T2 => "t2",
            TestbedId::T3 => "t3",
            TestbedId::TwoState => "two-state",
        })
    }
}

/// `S = {0, 1, 2}`, `A = {0, 1}`, `eps = +-1`,
/// `K(x, a, eps) = clamp(x + a + eps, 0, 2)`,
/// `R(x, a) = (x - 1)/2 - 0.35 a`, `F(x) = x - 1`.
pub fn t1_chain(horizon: usize) -> Result<MdpModel> {
    MdpModel::builder(horizon, Space::finite(vec![0.0, 1.0, 2.0]), ActionSpace::finite(vec![0.0, 1.0]))
        .name("t1")
        .noise(NoiseLaw::rademacher())
        .kernel(|_, x, a, e| (x + a + e).clamp(0.0, 2.0))
        .reward(|_, x, a| 0.5 * (x - 1.0) - 0.35 * a)
        .terminal(|x| x - 1.0)
        .r_max(1.0)
        .lipschitz(0.5, 1.0)
        .build()
}

/// `S = A = {0, 1}`; with probability 1/2 the state moves to the chosen
/// action, otherwise it stays. `R(x, a) = 0.6 x - 0.3 a`, `F(x) = 0.8 x`.
pub fn two_state(horizon: usize) -> Result<MdpModel> {
    MdpModel::builder(horizon, Space::finite(vec![0.0, 1.0]), ActionSpace::finite(vec![0.0, 1.0]))
        .name("two-state")
        .noise(NoiseLaw::rademacher())
        .kernel(|_, x, a, e| if e > 0.0 { a } else { x })
        .reward(|_, x, a| 0.6 * x - 0.3 * a)
        .terminal(|x| 0.8 * x)
        .r_max(1.0)
        .lipschitz(0.6, 1.0)
        .build()
}

/// `S = {0, 1, 2, 3}`, `A = {-1, 0, 1}`, no noise,
/// `K(x, a) = clamp(x + a, 0, 3)`, `R_h(x, a) = 0.2 x - 0.3 |a|`,
/// `F(x) = 0.25 x`.
pub fn t3_deterministic(horizon: usize) -> Result<MdpModel> {
    MdpModel::builder(
        horizon,
        Space::finite(vec![0.0, 1.0, 2.0, 3.0]),
        ActionSpace::finite(vec![-1.0, 0.0, 1.0]),
    )
    .name("t3")
    .kernel(|_, x, a, _| (x + a).clamp(0.0, 3.0))
    .reward(|_, x, a| 0.2 * x - 0.3 * a.abs())
    .terminal(|x| 0.25 * x)
    .r_max(1.0)
    .lipschitz(0.2, 1.0)
    .build()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    /// Control drift `Delta`.
    pub drift: f64,
    /// Noise scale `sigma`.
    pub sigma: f64,
    /// Control cost `kappa`.
    pub kappa: f64,
    pub r_max: f64,
    /// Points in the uniform evaluation grid on `[-1, 1]`.
    pub action_points: usize,
}

impl Default for GaussianParams {
    fn default() -> Self {
        Self {
            drift: 0.5,
            sigma: 0.5,
            kappa: 0.1,
            r_max: 2.0,
            action_points: 5,
        }
    }
}

/// `S = R`, `A = [-1, 1]`, `K(x, a, eps) = x + Delta a + sigma eps`,
/// `R(x, a) = max(-x^2 - kappa a^2, -r_max)`, `F(x) = max(-x^2, -r_max)`.
pub fn t2_gaussian(horizon: usize, p: GaussianParams) -> Result<MdpModel> {
    if !(p.sigma > 0.0) || !(p.r_max > 0.0) || !(p.kappa >= 0.0) || !p.drift.is_finite() {
        return Err(Error::invalid("gaussian testbed needs sigma > 0, r_max > 0, kappa >= 0"));
    }
    let GaussianParams {
        drift,
        sigma,
        kappa,
        r_max,
        ..
    } = p;
    MdpModel::builder(horizon, Space::real_line(), ActionSpace::interval(-1.0, 1.0, p.action_points)?)
        .name("t2")
        .noise(NoiseLaw::StandardNormal)
        .kernel(move |_, x, a, e| x + drift * a + sigma * e)
        .gaussian_kernel(GaussianKernel { drift, sigma })
        .reward(move |_, x, a| (-x * x - kappa * a * a).max(-r_max))
        .terminal(move |x| (-x * x).max(-r_max))
        .r_max(r_max)
        .lipschitz(2.0 * r_max.sqrt(), 1.0f64.max(drift.abs()))
        .build()
}
