//! Basis systems with analytically known second-moment matrices.
//!
//! State bases `gamma_K` are paired with per-stage reference measures
//! `mu_h`; noise bases `psi_K` are zero-mean under the noise law. In both
//! cases `Sigma = E[b b^T]` is known in closed form, so regression
//! coefficients are plain sample means of `Z * Sigma^{-1} b(X)` and no
//! empirical covariance matrix is ever inverted.

mod hermite;
mod reference;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::NoiseLaw;

pub use hermite::{hermite_derivatives, orthonormal_hermite};
pub use reference::ReferenceMeasure;

/// Default half-width of the standardized domain on which polynomial
/// bases are certified.
pub const DEFAULT_DOMAIN_BOUND: f64 = 6.0;

/// Mesh resolution used to compute sup-norm constants on `[-B, B]`.
const CERT_MESH: usize = 4001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum StateFamily {
    /// Orthonormal probabilists' Hermite polynomials in standardized coordinates.
    Hermite,
    /// Raw monomials `1, z, ..., z^{K-1}` in standardized coordinates.
    Monomial,
    /// Scaled indicators `1{x = s_j} / sqrt(p_j)` of the listed states.
    Indicator { atoms: Vec<f64>, probs: Vec<f64> },
}

/// State basis `gamma_K` with its analytic `Sigma^{-1}` action.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBasis {
    family: StateFamily,
    size: usize,
    domain_bound: f64,
    /// `None` means `Sigma = I`.
    sigma_inv: Option<DMatrix<f64>>,
    lambda: f64,
    lipschitz_std: f64,
}

/// Moments `E[Z^n]` of the standard normal law.
fn normal_moment(n: usize) -> f64 {
    if n % 2 == 1 {
        0.0
    } else {
        (1..n).step_by(2).map(|k| k as f64).product()
    }
}

impl StateBasis {
    /// Orthonormal Hermite system of size `k`; `Sigma = I`.
    pub fn hermite(k: usize) -> Result<Self> {
        Self::hermite_on(k, DEFAULT_DOMAIN_BOUND)
    }

    pub fn hermite_on(k: usize, domain_bound: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("basis size must be at least 1"));
        }
        if !(domain_bound > 0.0) {
            return Err(Error::invalid("domain bound must be positive"));
        }
        let mut b = Self {
            family: StateFamily::Hermite,
            size: k,
            domain_bound,
            sigma_inv: None,
            lambda: 0.0,
            lipschitz_std: 0.0,
        };
        b.certify();
        Ok(b)
    }

    /// Monomials `z^0..z^{k-1}`; `Sigma_{ij} = E[Z^{i+j}]`, inverted once.
    pub fn monomial(k: usize, domain_bound: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("basis size must be at least 1"));
        }
        if k > 8 {
            return Err(Error::invalid("monomial basis is limited to 8 terms (conditioning)"));
        }
        let sigma = DMatrix::from_fn(k, k, |i, j| normal_moment(i + j));
        let inv = sigma
            .cholesky()
            .ok_or_else(|| Error::invalid("monomial moment matrix is not positive definite"))?
            .inverse();
        let mut b = Self {
            family: StateFamily::Monomial,
            size: k,
            domain_bound,
            sigma_inv: Some(inv),
            lambda: 0.0,
            lipschitz_std: 0.0,
        };
        b.certify();
        Ok(b)
    }

    /// Indicators of `atoms` scaled by `1/sqrt(p)`, where `p` is the
    /// reference probability of each atom; `Sigma = I`. The atoms may be a
    /// strict subset of the state space.
    pub fn indicator(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::invalid("indicator basis needs matching, non-empty atoms and probs"));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0)) {
            return Err(Error::invalid(format!(
                "indicator basis atom with probability {p} cannot be rescaled"
            )));
        }
        let size = atoms.len();
        let lambda = probs.iter().map(|p| 1.0 / p.sqrt()).fold(0.0, f64::max);
        let mut lip: f64 = 0.0;
        for i in 0..size {
            for j in 0..i {
                let num = (1.0 / probs[i] + 1.0 / probs[j]).sqrt();
                lip = lip.max(num / (atoms[i] - atoms[j]).abs());
            }
            // leaving the atom set drops a single indicator
        }
        Ok(Self {
            family: StateFamily::Indicator { atoms, probs },
            size,
            domain_bound: f64::INFINITY,
            sigma_inv: None,
            lambda,
            lipschitz_std: lip,
        })
    }

    pub fn family(&self) -> &StateFamily {
        &self.family
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn domain_bound(&self) -> f64 {
        self.domain_bound
    }

    pub fn identity_sigma(&self) -> bool {
        self.sigma_inv.is_none()
    }

    /// Polynomial families need a Gaussian measure (unless constant);
    /// indicators need a finite one charging every atom.
    pub fn check_compatible(&self, mu: &ReferenceMeasure) -> Result<()> {
        match (&self.family, mu) {
            (StateFamily::Hermite | StateFamily::Monomial, ReferenceMeasure::GaussianSchedule { .. }) => Ok(()),
            (StateFamily::Hermite | StateFamily::Monomial, ReferenceMeasure::Finite { .. }) if self.size == 1 => {
                Ok(())
            }
            (StateFamily::Indicator { atoms, probs }, ReferenceMeasure::Finite { atoms: ma, probs: mp, .. }) => {
                for (a, p) in atoms.iter().zip(probs) {
                    let j = ma
                        .iter()
                        .position(|m| m == a)
                        .ok_or_else(|| Error::invalid(format!("basis atom {a} not charged by the reference measure")))?;
                    if (mp[j] - p).abs() > 1e-12 {
                        return Err(Error::invalid(format!(
                            "basis scaling for atom {a} uses p={p}, reference measure has {}",
                            mp[j]
                        )));
                    }
                }
                Ok(())
            }
            _ => Err(Error::invalid(
                "state basis family does not match the reference measure (polynomial bases need a Gaussian schedule)",
            )),
        }
    }

    /// `gamma_K(x)` at stage `h`, written into `out`.
    pub fn evaluate(&self, mu: &ReferenceMeasure, h: usize, x: f64, out: &mut [f64]) {
        match &self.family {
            StateFamily::Hermite => orthonormal_hermite(mu.standardize(h, x), out),
            StateFamily::Monomial => {
                let z = mu.standardize(h, x);
                let mut p = 1.0;
                for o in out.iter_mut() {
                    *o = p;
                    p *= z;
                }
            }
            StateFamily::Indicator { atoms, probs } => {
                for ((o, &a), &p) in out.iter_mut().zip(atoms).zip(probs) {
                    *o = if a == x { 1.0 / p.sqrt() } else { 0.0 };
                }
            }
        }
    }

    /// `v <- Sigma^{-1} v`.
    pub fn sigma_inverse_apply(&self, v: &mut [f64]) {
        if let Some(inv) = &self.sigma_inv {
            let w = inv * DVector::from_column_slice(v);
            v.copy_from_slice(w.as_slice());
        }
    }

    /// Declared `Sigma_{h,K}` (stage independent after standardization).
    pub fn declared_sigma(&self) -> DMatrix<f64> {
        match &self.family {
            StateFamily::Monomial => DMatrix::from_fn(self.size, self.size, |i, j| normal_moment(i + j)),
            _ => DMatrix::identity(self.size, self.size),
        }
    }

    /// `Lambda_K >= |Sigma^{-1} gamma_K(x)|_inf`, on the certified domain.
    pub fn lambda_bound(&self) -> f64 {
        self.lambda
    }

    /// `L_{gamma,K}` in the original state units at stage `h`.
    pub fn lipschitz_bound(&self, mu: &ReferenceMeasure, h: usize) -> f64 {
        match self.family {
            StateFamily::Indicator { .. } => self.lipschitz_std,
            _ => self.lipschitz_std / mu.std(h),
        }
    }

    /// `rho_{gamma,K}^2 >= E|gamma_K(X)|^2` (the trace of `Sigma`).
    pub fn second_moment_bound(&self) -> f64 {
        self.declared_sigma().trace()
    }

    fn certify(&mut self) {
        let b = self.domain_bound;
        let k = self.size;
        let mut vals = vec![0.0; k];
        let mut ders = vec![0.0; k];
        let mut lambda: f64 = 0.0;
        let mut lip: f64 = 0.0;
        for i in 0..CERT_MESH {
            let z = -b + 2.0 * b * i as f64 / (CERT_MESH - 1) as f64;
            match self.family {
                StateFamily::Hermite => {
                    orthonormal_hermite(z, &mut vals);
                    hermite_derivatives(z, &mut ders);
                }
                _ => {
                    for (n, (v, d)) in vals.iter_mut().zip(ders.iter_mut()).enumerate() {
                        *v = z.powi(n as i32);
                        *d = if n == 0 { 0.0 } else { n as f64 * z.powi(n as i32 - 1) };
                    }
                }
            }
            lip = lip.max(ders.iter().map(|d| d * d).sum::<f64>().sqrt());
            self.sigma_inverse_apply(&mut vals);
            lambda = lambda.max(vals.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        self.lambda = lambda;
        self.lipschitz_std = lip;
    }
}

/// Identifier-plus-values description of a noise basis `psi_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseBasis {
    /// `psi_k = He_k / sqrt(k!)`, `k = 1..=size`, under `N(0, 1)`.
    Hermite { size: usize, domain_bound: f64 },
    /// Centered, orthonormalized atom indicators of a finite noise law;
    /// `values[i][k] = psi_k(atoms[i])`.
    Table { atoms: Vec<f64>, values: Vec<Vec<f64>> },
}

impl NoiseBasis {
    pub fn hermite(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("noise basis size must be at least 1"));
        }
        Ok(NoiseBasis::Hermite {
            size: k,
            domain_bound: DEFAULT_DOMAIN_BOUND,
        })
    }

    /// All `n - 1` zero-mean directions of an `n`-atom law, orthonormal
    /// under it. Truncate with [`NoiseBasis::truncated`] for fewer.
    pub fn indicator(atoms: &[f64], probs: &[f64]) -> Result<Self> {
        if atoms.len() != probs.len() || atoms.is_empty() {
            return Err(Error::invalid("noise indicator basis needs matching, non-empty atoms and probs"));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0)) {
            return Err(Error::invalid(format!("noise atom with probability {p} makes the rescaling singular")));
        }
        let n = atoms.len();
        if n < 2 {
            return Err(Error::invalid(
                "single-atom noise law admits no non-constant zero-mean function",
            ));
        }
        let k = n - 1;
        // centered indicators of atoms 1..n; covariance diag(p) - p p^T
        let cov = DMatrix::from_fn(k, k, |i, j| {
            let (pi, pj) = (probs[i + 1], probs[j + 1]);
            if i == j {
                pi - pi * pj
            } else {
                -pi * pj
            }
        });
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::invalid("indicator covariance is singular"))?;
        let values = (0..n)
            .map(|i| {
                let u = DVector::from_fn(k, |j, _| if i == j + 1 { 1.0 - probs[j + 1] } else { -probs[j + 1] });
                let psi = chol.l().solve_lower_triangular(&u).expect("non-singular factor");
                psi.iter().copied().collect()
            })
            .collect();
        Ok(NoiseBasis::Table {
            atoms: atoms.to_vec(),
            values,
        })
    }

    /// Default basis for a noise law: Hermite of size `k` for Gaussian noise,
    /// the first `k` indicator directions for a finite law.
    pub fn for_law(law: &NoiseLaw, k: usize) -> Result<Self> {
        match law {
            NoiseLaw::StandardNormal => Self::hermite(k),
            NoiseLaw::Discrete { atoms, probs } => Self::indicator(atoms, probs)?.truncated(k),
        }
    }

    /// Keeps the first `k` functions.
    pub fn truncated(self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!("cannot truncate a noise basis of size {} to {k}", self.len())));
        }
        Ok(match self {
            NoiseBasis::Hermite { domain_bound, .. } => NoiseBasis::Hermite { size: k, domain_bound },
            NoiseBasis::Table { atoms, values } => NoiseBasis::Table {
                atoms,
                values: values.into_iter().map(|row| row[..k].to_vec()).collect(),
            },
        })
    }

    pub fn len(&self) -> usize {
        match self {
            NoiseBasis::Hermite { size, .. } => *size,
            NoiseBasis::Table { values, .. } => values[0].len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the basis is defined for (and zero-mean under) `law`.
    pub fn matches_law(&self, law: &NoiseLaw) -> bool {
        match (self, law) {
            (NoiseBasis::Hermite { .. }, NoiseLaw::StandardNormal) => true,
            (NoiseBasis::Table { atoms, .. }, NoiseLaw::Discrete { atoms: la, .. }) => atoms == la,
            _ => false,
        }
    }

    /// `psi_K(eps)`; a table basis is zero off its atoms.
    pub fn evaluate(&self, eps: f64, out: &mut [f64]) {
        match self {
            NoiseBasis::Hermite { size, .. } => {
                let mut buf = [0.0; 32];
                if *size < buf.len() {
                    orthonormal_hermite(eps, &mut buf[..=*size]);
                    out.copy_from_slice(&buf[1..=*size]);
                } else {
                    let mut v = vec![0.0; size + 1];
                    orthonormal_hermite(eps, &mut v);
                    out.copy_from_slice(&v[1..]);
                }
            }
            NoiseBasis::Table { atoms, values } => match atoms.iter().position(|&a| a == eps) {
                Some(i) => out.copy_from_slice(&values[i]),
                None => out.iter_mut().for_each(|o| *o = 0.0),
            },
        }
    }

    /// `v <- Sigma_E^{-1} v`; every shipped noise basis has `Sigma_E = I`.
    pub fn sigma_inverse_apply(&self, _v: &mut [f64]) {}

    /// `Lambda_{E,K}`: sup of `|psi_K|_inf` (on `[-B, B]` for Hermite).
    pub fn lambda_bound(&self) -> f64 {
        match self {
            NoiseBasis::Hermite { size, domain_bound } => {
                let mut v = vec![0.0; size + 1];
                let mut best: f64 = 0.0;
                for i in 0..CERT_MESH {
                    let z = -domain_bound + 2.0 * domain_bound * i as f64 / (CERT_MESH - 1) as f64;
                    orthonormal_hermite(z, &mut v);
                    best = v[1..].iter().fold(best, |m, x| m.max(x.abs()));
                }
                best
            }
            NoiseBasis::Table { values, .. } => values
                .iter()
                .flatten()
                .fold(0.0, |m: f64, x| m.max(x.abs())),
        }
    }

    /// `rho_{psi,K}^2 = E|psi_K|^2 = K`.
    pub fn second_moment_bound(&self) -> f64 {
        self.len() as f64
    }
}
