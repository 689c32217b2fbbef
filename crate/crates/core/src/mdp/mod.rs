//! Finite-horizon MDPs in random-iterative-function form.
//!
//! A model is the tuple `(S, A, K_1..K_H, R_0..R_{H-1}, F, H)` together with
//! a noise law `P_E`: the next state is `S_{t} = K_t(S_{t-1}, a_{t-1}, eps_t)`
//! with `eps_t` i.i.d. under `P_E`. States and actions are scalar. Finite
//! spaces are enumerated point sets; continuous ones are intervals, and the
//! action space always carries a finite evaluation grid so that every
//! supremum over actions is a terminating maximum.

mod dense;
mod exact;
mod metric;
mod policy;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::NormalQuadrature;
use crate::rng::Streams;

pub use dense::{solve_dense_grid, DenseGridOptions, DenseGridSolution};
pub use exact::{solve_exact, ExactSolution};
pub use metric::{Combiner, PointMetric, ProductMetric};
pub use policy::{evaluate_policy_mc, McEstimate, Policy, TablePolicy};

const MEMBERSHIP_TOL: f64 = 1e-12;

/// A scalar state or action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Space {
    /// Enumerated points, in enumeration order.
    Finite { points: Vec<f64> },
    /// Closed interval; the bounds may be infinite.
    Interval { lo: f64, hi: f64 },
}

impl Space {
    pub fn finite(points: Vec<f64>) -> Self {
        Space::Finite { points }
    }

    pub fn real_line() -> Self {
        Space::Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn points(&self) -> Option<&[f64]> {
        match self {
            Space::Finite { points } => Some(points),
            Space::Interval { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Space::Finite { .. })
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        match self {
            Space::Finite { points } => points
                .iter()
                .position(|&p| (p - x).abs() <= MEMBERSHIP_TOL * p.abs().max(1.0)),
            Space::Interval { .. } => None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Space::Finite { .. } => self.index_of(x).is_some(),
            Space::Interval { lo, hi } => !x.is_nan() && *lo <= x && x <= *hi,
        }
    }

    /// Draw for spot checks: uniform on finite or bounded spaces, a wide
    /// normal (clamped) otherwise.
    pub fn sample_spot(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Space::Finite { points } => points[rng.random_range(0..points.len())],
            Space::Interval { lo, hi } if lo.is_finite() && hi.is_finite() => {
                lo + (hi - lo) * rng.random::<f64>()
            }
            Space::Interval { lo, hi } => {
                let z: f64 = rng.sample(StandardNormal);
                (3.0 * z).clamp(*lo, *hi)
            }
        }
    }
}

/// Action space plus the finite grid used for every sup over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub space: Space,
    pub eval: Vec<f64>,
}

impl ActionSpace {
    pub fn finite(points: Vec<f64>) -> Self {
        Self {
            eval: points.clone(),
            space: Space::Finite { points },
        }
    }

    /// Interval `[lo, hi]` with a uniform evaluation grid of `size` points.
    pub fn interval(lo: f64, hi: f64, size: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || size == 0 {
            return Err(Error::invalid("action interval needs finite lo <= hi and a non-empty grid"));
        }
        Ok(Self {
            space: Space::Interval { lo, hi },
            eval: uniform_grid(lo, hi, size),
        })
    }

    pub fn contains(&self, a: f64) -> bool {
        self.space.contains(a)
    }
}

/// `size` equispaced points covering `[lo, hi]` (just `lo` when size is 1).
pub fn uniform_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lo];
    }
    (0..size)
        .map(|i| lo + (hi - lo) * i as f64 / (size - 1) as f64)
        .collect()
}

/// The law `P_E` of the driving noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseLaw {
    StandardNormal,
    Discrete { atoms: Vec<f64>, probs: Vec<f64> },
}

impl NoiseLaw {
    pub fn discrete(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::invalid("discrete noise needs matching, non-empty atoms and probs"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("noise probabilities must be non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("noise probabilities sum to {total}, not 1")));
        }
        Ok(NoiseLaw::Discrete { atoms, probs })
    }

    /// Point mass at zero.
    pub fn degenerate() -> Self {
        NoiseLaw::Discrete {
            atoms: vec![0.0],
            probs: vec![1.0],
        }
    }

    /// Symmetric two-point law on `{-1, +1}`.
    pub fn rademacher() -> Self {
        NoiseLaw::Discrete {
            atoms: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            NoiseLaw::StandardNormal => false,
            NoiseLaw::Discrete { probs, .. } => probs.iter().filter(|&&p| p > 0.0).count() <= 1,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            NoiseLaw::StandardNormal => rng.sample(StandardNormal),
            NoiseLaw::Discrete { atoms, probs } => {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    cum += p;
                    if u < cum {
                        return *a;
                    }
                }
                // u is within rounding of 1: return the last atom with mass
                let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(atoms.len() - 1);
                atoms[last]
            }
        }
    }

    /// Atoms with their probabilities, when the support is finite.
    pub fn enumerate(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            NoiseLaw::StandardNormal => None,
            NoiseLaw::Discrete { atoms, probs } => {
                Some(atoms.iter().copied().zip(probs.iter().copied()).collect())
            }
        }
    }

    /// `E[f(eps)]`: exact for discrete laws, 64-node Gauss-Hermite otherwise.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        match self {
            NoiseLaw::StandardNormal => NormalQuadrature::standard().expect(f),
            NoiseLaw::Discrete { atoms, probs } => crate::numeric::compensated_sum(
                atoms.iter().zip(probs).map(|(&a, &p)| p * f(a)),
            ),
        }
    }
}

/// Lipschitz constants: `L_R` for rewards in the state, `L_K` for the kernel in `(x, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub reward: f64,
    pub kernel: f64,
}

/// Kernels of the form `K_t(x, a, eps) = x + drift * a + sigma * eps` with
/// standard normal noise; these have an evaluable transition density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub drift: f64,
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn mean(&self, x: f64, a: f64) -> f64 {
        x + self.drift * a
    }

    /// `d/dy log p(y | x, a)`.
    pub fn score(&self, y: f64, x: f64, a: f64) -> f64 {
        -(y - self.mean(x, a)) / (self.sigma * self.sigma)
    }
}

pub type KernelFn = dyn Fn(usize, f64, f64, f64) -> f64 + Send + Sync;
pub type RewardFn = dyn Fn(usize, f64, f64) -> f64 + Send + Sync;
pub type TerminalFn = dyn Fn(f64) -> f64 + Send + Sync;

/// An immutable finite-horizon MDP.
#[derive(Clone)]
pub struct MdpModel {
    name: String,
    horizon: usize,
    states: Space,
    actions: ActionSpace,
    noise: NoiseLaw,
    kernel: Arc<KernelFn>,
    reward: Arc<RewardFn>,
    terminal: Arc<TerminalFn>,
    r_max: f64,
    lipschitz: LipschitzConstants,
    metric: ProductMetric,
    gaussian_kernel: Option<GaussianKernel>,
}

impl fmt::Debug for MdpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MdpModel")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("states", &self.states)
            .field("actions", &self.actions)
            .field("noise", &self.noise)
            .field("r_max", &self.r_max)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

pub struct MdpBuilder {
    name: String,
    horizon: usize,
    states: Space,
    actions: ActionSpace,
    noise: NoiseLaw,
    kernel: Arc<KernelFn>,
    reward: Arc<RewardFn>,
    terminal: Arc<TerminalFn>,
    r_max: f64,
    lipschitz: LipschitzConstants,
    metric: ProductMetric,
    gaussian_kernel: Option<GaussianKernel>,
}

impl MdpBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn noise(mut self, noise: NoiseLaw) -> Self {
        self.noise = noise;
        self
    }

    pub fn kernel(mut self, k: impl Fn(usize, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.kernel = Arc::new(k);
        self
    }

    pub fn reward(mut self, r: impl Fn(usize, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.reward = Arc::new(r);
        self
    }

    pub fn terminal(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(f);
        self
    }

    pub fn r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn lipschitz(mut self, reward: f64, kernel: f64) -> Self {
        self.lipschitz = LipschitzConstants { reward, kernel };
        self
    }

    pub fn metric(mut self, metric: ProductMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn gaussian_kernel(mut self, g: GaussianKernel) -> Self {
        self.gaussian_kernel = Some(g);
        self
    }

    pub fn build(self) -> Result<MdpModel> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.actions.eval.is_empty() {
            return Err(Error::invalid("action evaluation grid is empty"));
        }
        if let Some(a) = self.actions.eval.iter().find(|&&a| !self.actions.contains(a)) {
            return Err(Error::ActionOutsideSpace(*a));
        }
        if let Space::Finite { points } = &self.states {
            if points.is_empty() {
                return Err(Error::invalid("finite state space is empty"));
            }
        }
        if !(self.r_max >= 0.0) {
            return Err(Error::invalid("r_max must be non-negative"));
        }
        Ok(MdpModel {
            name: self.name,
            horizon: self.horizon,
            states: self.states,
            actions: self.actions,
            noise: self.noise,
            kernel: self.kernel,
            reward: self.reward,
            terminal: self.terminal,
            r_max: self.r_max,
            lipschitz: self.lipschitz,
            metric: self.metric,
            gaussian_kernel: self.gaussian_kernel,
        })
    }
}

impl MdpModel {
    /// Starts a model with zero rewards, identity dynamics and degenerate noise.
    pub fn builder(horizon: usize, states: Space, actions: ActionSpace) -> MdpBuilder {
        MdpBuilder {
            name: "custom".into(),
            horizon,
            states,
            actions,
            noise: NoiseLaw::degenerate(),
            kernel: Arc::new(|_, x, _, _| x),
            reward: Arc::new(|_, _, _| 0.0),
            terminal: Arc::new(|_| 0.0),
            r_max: 0.0,
            lipschitz: LipschitzConstants {
                reward: 0.0,
                kernel: 1.0,
            },
            metric: ProductMetric::default(),
            gaussian_kernel: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> &Space {
        &self.states
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn eval_actions(&self) -> &[f64] {
        &self.actions.eval
    }

    pub fn noise(&self) -> &NoiseLaw {
        &self.noise
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn lipschitz(&self) -> LipschitzConstants {
        self.lipschitz
    }

    pub fn metric(&self) -> &ProductMetric {
        &self.metric
    }

    pub fn gaussian_kernel(&self) -> Option<&GaussianKernel> {
        self.gaussian_kernel.as_ref()
    }

    /// Clipping level `(H - h + 1) * r_max` bounding `|V_h|`.
    pub fn value_bound(&self, h: usize) -> f64 {
        (self.horizon + 1 - h.min(self.horizon + 1)) as f64 * self.r_max
    }

    /// `K_t(x, a, eps)` without validation.
    #[inline]
    pub fn kernel(&self, t: usize, x: f64, a: f64, eps: f64) -> f64 {
        (self.kernel)(t, x, a, eps)
    }

    #[inline]
    pub fn reward(&self, h: usize, x: f64, a: f64) -> f64 {
        (self.reward)(h, x, a)
    }

    #[inline]
    pub fn terminal(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    /// One validated transition `K_t(x, a, eps)`, `1 <= t <= H`.
    pub fn step(&self, t: usize, x: f64, a: f64, eps: f64) -> Result<f64> {
        if t == 0 || t > self.horizon {
            return Err(Error::StageOutOfRange {
                stage: t,
                horizon: self.horizon,
            });
        }
        if !self.states.contains(x) {
            return Err(Error::StateOutsideSpace(x));
        }
        if !self.actions.contains(a) {
            return Err(Error::ActionOutsideSpace(a));
        }
        let y = self.kernel(t, x, a, eps);
        if !self.states.contains(y) {
            return Err(Error::StateOutsideSpace(y));
        }
        Ok(y)
    }

    /// Spot-checks the reward bound, kernel range and kernel Lipschitz
    /// constant on `draws` random inputs.
    pub fn check_invariants(&self, draws: usize, seed: u64) -> Result<()> {
        let streams = Streams::new(seed);
        let tol = 1e-12;
        for i in 0..draws as u64 {
            let mut rng = streams.at(i, 0);
            let t = rng.random_range(1..=self.horizon);
            let x = self.states.sample_spot(&mut rng);
            let x2 = self.states.sample_spot(&mut rng);
            let a = self.actions.eval[rng.random_range(0..self.actions.eval.len())];
            let a2 = self.actions.space.sample_spot(&mut rng);
            let eps = self.noise.sample(&mut rng);
            let r = self.reward(t - 1, x, a);
            let f = self.terminal(x);
            if r.abs() > self.r_max + tol || f.abs() > self.r_max + tol {
                return Err(Error::invalid(format!(
                    "reward bound violated at x={x}, a={a}: |R|={}, |F|={} > r_max={}",
                    r.abs(),
                    f.abs(),
                    self.r_max
                )));
            }
            let y = self.step(t, x, a, eps)?;
            let y2 = self.kernel(t, x2, a2, eps);
            let lhs = self.metric.state.distance(y, y2);
            let rhs = self.lipschitz.kernel * self.metric.distance((x, a), (x2, a2));
            if lhs > rhs + tol * (1.0 + rhs) {
                return Err(Error::invalid(format!(
                    "kernel Lipschitz bound violated: {lhs} > {rhs} at ({x},{a}) vs ({x2},{a2})"
                )));
            }
        }
        Ok(())
    }
}
