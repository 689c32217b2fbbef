use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-stage sampling law `mu_h` for the primal regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceMeasure {
    /// `mu_h = N(center, (h + 1) / (2 alpha))`.
    GaussianSchedule { alpha: f64, center: f64 },
    /// The same finite law at every stage. With `stratified`, a block of
    /// `n` draws allocates `round(n p_j)` points to atom `j` (proportional
    /// allocation) instead of sampling i.i.d.
    Finite {
        atoms: Vec<f64>,
        probs: Vec<f64>,
        #[serde(default)]
        stratified: bool,
    },
}

impl ReferenceMeasure {
    pub fn gaussian(alpha: f64, center: f64) -> Result<Self> {
        if !(alpha > 0.0) || !center.is_finite() {
            return Err(Error::invalid("gaussian schedule needs alpha > 0 and a finite center"));
        }
        Ok(ReferenceMeasure::GaussianSchedule { alpha, center })
    }

    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let n = atoms.len();
        Self::finite(atoms, vec![1.0 / n as f64; n])
    }

    pub fn finite(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::invalid("finite reference measure needs matching, non-empty atoms and probs"));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("reference probabilities must be non-negative and sum to 1"));
        }
        Ok(ReferenceMeasure::Finite {
            atoms,
            probs,
            stratified: false,
        })
    }

    /// Switches a finite law to proportional-allocation sampling.
    pub fn stratified(self) -> Self {
        match self {
            ReferenceMeasure::Finite { atoms, probs, .. } => ReferenceMeasure::Finite {
                atoms,
                probs,
                stratified: true,
            },
            other => other,
        }
    }

    pub fn mean(&self, _h: usize) -> f64 {
        match self {
            ReferenceMeasure::GaussianSchedule { center, .. } => *center,
            ReferenceMeasure::Finite { atoms, probs, .. } => atoms.iter().zip(probs).map(|(a, p)| a * p).sum(),
        }
    }

    pub fn std(&self, h: usize) -> f64 {
        match self {
            ReferenceMeasure::GaussianSchedule { alpha, .. } => ((h as f64 + 1.0) / (2.0 * alpha)).sqrt(),
            ReferenceMeasure::Finite { atoms, probs, .. } => {
                let m = self.mean(h);
                atoms
                    .iter()
                    .zip(probs)
                    .map(|(a, p)| p * (a - m) * (a - m))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// Gaussian density, or the probability mass of `x` for a finite law.
    pub fn density(&self, h: usize, x: f64) -> f64 {
        match self {
            ReferenceMeasure::GaussianSchedule { center, .. } => {
                let s = self.std(h);
                let z = (x - center) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            }
            ReferenceMeasure::Finite { atoms, probs, .. } => atoms
                .iter()
                .zip(probs)
                .filter(|(a, _)| **a == x)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// `(x - mean_h) / std_h`; the identity shift when the law is a point mass.
    pub fn standardize(&self, h: usize, x: f64) -> f64 {
        let s = self.std(h);
        if s > 0.0 {
            (x - self.mean(h)) / s
        } else {
            x - self.mean(h)
        }
    }

    /// Draw `i` of a block of `n`; i.i.d. unless the law is stratified.
    pub fn sample_in_block<R: Rng + ?Sized>(&self, h: usize, i: usize, n: usize, rng: &mut R) -> f64 {
        match self {
            ReferenceMeasure::Finite {
                atoms,
                probs,
                stratified: true,
            } => {
                let u = (i as f64 + 0.5) / n as f64;
                let mut acc = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *a;
                    }
                }
                atoms[atoms.len() - 1]
            }
            _ => self.sample(h, rng),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, h: usize, rng: &mut R) -> f64 {
        match self {
            ReferenceMeasure::GaussianSchedule { center, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                center + self.std(h) * z
            }
            ReferenceMeasure::Finite { atoms, probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms
                    .iter()
                    .zip(probs)
                    .rev()
                    .find(|(_, &p)| p > 0.0)
                    .map(|(a, _)| a)
                    .expect("probabilities sum to one")
            }
        }
    }
}
