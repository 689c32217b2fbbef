//! Experiment configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::testbeds::{t1_chain, t2_gaussian, t3_deterministic, two_state, GaussianParams, TestbedId};
use crate::basis::{ReferenceMeasure, StateBasis, DEFAULT_DOMAIN_BOUND};
use crate::bounds::{GapExperiment, PenaltySpec, Seeds};
use crate::dual::{GridSpec, LipschitzMode};
use crate::error::{Error, FieldError, Result};
use crate::mdp::{solve_dense_grid, solve_exact, DenseGridOptions, MdpModel};
use crate::primal::PrimalOptions;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    Hermite,
    Monomial,
    /// Scaled indicators of the first `size` states.
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimalConfig {
    pub basis: BasisFamily,
    /// `K`.
    pub size: usize,
    /// `N`.
    pub samples: usize,
    /// Variance schedule `alpha_H` of the Gaussian reference measures;
    /// defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_domain_bound")]
    pub domain_bound: f64,
    /// Reference probabilities on a finite state space (uniform if absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_probs: Option<Vec<f64>>,
    #[serde(default)]
    pub stratified: bool,
    /// Replace the last regression step by plain Monte Carlo at `x0`.
    #[serde(default)]
    pub final_stage_mc: bool,
}

fn default_domain_bound() -> f64 {
    DEFAULT_DOMAIN_BOUND
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    NoiseBasis,
    Score,
    Exact,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub penalty: PenaltyKind,
    /// `K_pr` for the noise-basis family; harmonics for the score family.
    #[serde(default = "one")]
    pub size: usize,
    /// `M`.
    pub samples: usize,
    pub grid: GridSpec,
    #[serde(default = "default_lipschitz")]
    pub lipschitz: LipschitzMode,
}

fn one() -> usize {
    1
}

fn default_lipschitz() -> LipschitzMode {
    LipschitzMode::Theoretical
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    /// `N_test` pathwise problems for the upper estimate.
    pub n_test: usize,
    /// Policy paths for the lower estimate.
    pub n_lower: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    /// `N = M = 2^e` for each exponent.
    pub exponents: Vec<u32>,
    #[serde(default = "one")]
    pub replications: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            exponents: vec![7, 9, 11],
            replications: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Points of the parameter grid on `[0, 1]`.
    pub params: usize,
    pub exponents: Vec<u32>,
    pub replications: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            params: 21,
            exponents: (7..=13).collect(),
            replications: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub testbed: TestbedId,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianParams>,
    pub primal: PrimalConfig,
    pub dual: DualConfig,
    pub test: TestConfig,
    pub seeds: Seeds,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.to_string(),
                message,
            })
        };
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bad("schema_version", format!("expected {CONFIG_SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.horizon == 0 {
            bad("horizon", "must be at least 1".into());
        }
        if self.primal.size == 0 {
            bad("primal.size", "must be at least 1".into());
        }
        if self.primal.samples == 0 {
            bad("primal.samples", "must be at least 1".into());
        }
        if let Some(a) = self.primal.alpha {
            if !(a > 0.0) {
                bad("primal.alpha", format!("must be positive, got {a}"));
            }
        }
        if !(self.primal.domain_bound > 0.0) {
            bad("primal.domain_bound", "must be positive".into());
        }
        if self.dual.size == 0 && matches!(self.dual.penalty, PenaltyKind::NoiseBasis) {
            bad("dual.size", "must be at least 1".into());
        }
        if self.dual.samples == 0 {
            bad("dual.samples", "must be at least 1".into());
        }
        match &self.dual.grid {
            GridSpec::Uniform { points, lo, hi } | GridSpec::Random { points, lo, hi, .. } => {
                if *points == 0 {
                    bad("dual.grid.points", "must be at least 1".into());
                }
                if !(lo <= hi) {
                    bad("dual.grid", "needs lo <= hi".into());
                }
            }
            GridSpec::Full => {
                if !self.testbed.is_finite() {
                    bad("dual.grid", "a full grid needs a finite state space".into());
                }
            }
        }
        if let LipschitzMode::Fixed { value } = self.dual.lipschitz {
            if !(value > 0.0) {
                bad("dual.lipschitz.value", "must be positive".into());
            }
        }
        if self.test.n_test == 0 {
            bad("test.n_test", "must be at least 1".into());
        }
        if self.test.n_lower == 0 {
            bad("test.n_lower", "must be at least 1".into());
        }
        if self.ladder.exponents.is_empty() {
            bad("ladder.exponents", "must not be empty".into());
        }
        if self.ladder.exponents.iter().any(|&e| e > 30) {
            bad("ladder.exponents", "exponents above 30 are not supported".into());
        }
        if self.ladder.replications == 0 {
            bad("ladder.replications", "must be at least 1".into());
        }
        if self.probe.params == 0 {
            bad("probe.params", "must be at least 1".into());
        }
        if self.probe.replications == 0 {
            bad("probe.replications", "must be at least 1".into());
        }
        if self.probe.exponents.is_empty() || self.probe.exponents.iter().any(|&e| e > 30) {
            bad("probe.exponents", "needs exponents in 0..=30".into());
        }
        match self.testbed {
            TestbedId::T2 => {
                if matches!(self.primal.basis, BasisFamily::Indicator) {
                    bad("primal.basis", "indicator bases need a finite state space".into());
                }
                if matches!(self.dual.penalty, PenaltyKind::Exact) {
                    bad("dual.penalty", "the exact penalty needs a finite model".into());
                }
                if let Some(p) = &self.gaussian {
                    if p.action_points == 0 {
                        bad("gaussian.action_points", "must be at least 1".into());
                    }
                    if !(p.sigma > 0.0) {
                        bad("gaussian.sigma", "must be positive".into());
                    }
                    if !(p.r_max > 0.0) {
                        bad("gaussian.r_max", "must be positive".into());
                    }
                }
            }
            _ => {
                if self.gaussian.is_some() {
                    bad("gaussian", "only applies to the t2 testbed".into());
                }
                if matches!(self.dual.penalty, PenaltyKind::Score) {
                    bad("dual.penalty", "the score family needs the Gaussian testbed".into());
                }
                if matches!(self.primal.basis, BasisFamily::Hermite | BasisFamily::Monomial) && self.primal.size > 1 {
                    bad("primal.size", "polynomial bases on a finite testbed are limited to the constant".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn model(&self) -> Result<MdpModel> {
        match self.testbed {
            TestbedId::T1 => t1_chain(self.horizon),
            TestbedId::T2 => t2_gaussian(self.horizon, self.gaussian.unwrap_or_default()),
            TestbedId::T3 => t3_deterministic(self.horizon),
            TestbedId::TwoState => two_state(self.horizon),
        }
    }

    pub fn start_state(&self) -> f64 {
        self.x0.unwrap_or(match self.testbed {
            TestbedId::T1 => 1.0,
            _ => 0.0,
        })
    }

    pub fn reference(&self, model: &MdpModel) -> Result<ReferenceMeasure> {
        match model.states().points() {
            Some(states) => {
                let mu = match &self.primal.reference_probs {
                    Some(p) => ReferenceMeasure::finite(states.to_vec(), p.clone())?,
                    None => ReferenceMeasure::uniform(states.to_vec())?,
                };
                Ok(if self.primal.stratified { mu.stratified() } else { mu })
            }
            None => ReferenceMeasure::gaussian(self.primal.alpha.unwrap_or(self.horizon as f64), self.start_state()),
        }
    }

    pub fn state_basis(&self, mu: &ReferenceMeasure) -> Result<StateBasis> {
        let b = self.primal.domain_bound;
        let basis = match self.primal.basis {
            BasisFamily::Hermite => StateBasis::hermite_on(self.primal.size, b)?,
            BasisFamily::Monomial => StateBasis::monomial(self.primal.size, b)?,
            BasisFamily::Indicator => match mu {
                ReferenceMeasure::Finite { atoms, probs, .. } => {
                    if self.primal.size > atoms.len() {
                        return Err(Error::Config(vec![FieldError {
                            field: "primal.size".into(),
                            message: format!("indicator basis cannot exceed {} states", atoms.len()),
                        }]));
                    }
                    let k = self.primal.size;
                    StateBasis::indicator(atoms[..k].to_vec(), probs[..k].to_vec())?
                }
                _ => return Err(Error::invalid("indicator bases need a finite reference measure")),
            },
        };
        basis.check_compatible(mu)?;
        Ok(basis)
    }

    /// `V*_0(x0)`: exact for finite testbeds, dense-grid DP for the Gaussian one.
    pub fn oracle(&self, model: &MdpModel) -> Result<f64> {
        let x0 = self.start_state();
        if model.states().is_finite() {
            solve_exact(model)?.value(0, x0)
        } else {
            Ok(solve_dense_grid(model, DenseGridOptions::default())?.value(0, x0))
        }
    }

    /// Stable hex digest of the canonical serialization.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(format!("{:016x}", fnv1a(self.to_toml()?.as_bytes())))
    }

    pub fn experiment(&self) -> Result<GapExperiment> {
        let model = self.model()?;
        let reference = self.reference(&model)?;
        let state_basis = self.state_basis(&reference)?;
        let x0 = self.start_state();
        if !model.states().contains(x0) {
            return Err(Error::Config(vec![FieldError {
                field: "x0".into(),
                message: format!("{x0} is not a state of {}", self.testbed),
            }]));
        }
        let penalty = match self.dual.penalty {
            PenaltyKind::NoiseBasis => PenaltySpec::NoiseBasis { size: self.dual.size },
            PenaltyKind::Score => PenaltySpec::Score {
                harmonics: self.dual.size,
            },
            PenaltyKind::Exact => PenaltySpec::Exact,
            PenaltyKind::Zero => PenaltySpec::Zero,
        };
        Ok(GapExperiment {
            testbed: self.testbed.to_string(),
            fingerprint: self.fingerprint()?,
            oracle: Some(self.oracle(&model)?),
            model,
            x0,
            state_basis,
            reference,
            primal: PrimalOptions {
                samples: self.primal.samples,
                final_stage_mc: self.primal.final_stage_mc.then_some(x0),
            },
            penalty,
            grid: self.dual.grid.clone(),
            inner_samples: self.dual.samples,
            lipschitz: self.dual.lipschitz,
            n_test: self.test.n_test,
            n_lower: self.test.n_lower,
            seeds: self.seeds,
        })
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
