use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_lipschitz, CoefficientField, GridSpec, LipschitzMode, PenaltyFamily, ValueSource};
use crate::basis::NoiseBasis;
use crate::error::{Error, Result};
use crate::mdp::{MdpModel, NoiseLaw};
use crate::numeric::{normal_expect_simpson, CompensatedSum};
use crate::rng::Streams;

pub const DUAL_SCHEMA_VERSION: u32 = 1;

/// `eta~_{t+1}(x, a, eps) = sum_k c~_k(x, a) psi_k(eps)` for every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMartingale {
    pub schema_version: u32,
    pub basis: NoiseBasis,
    /// Inner sample count `M`.
    pub inner_samples: usize,
    pub seed: u64,
    pub lipschitz_mode: LipschitzMode,
    /// `stages[t]` holds the coefficients of the increment at `t + 1`.
    pub stages: Vec<CoefficientField>,
}

impl DualMartingale {
    pub fn eta(&self, t: usize, x: f64, a: f64, eps: f64) -> f64 {
        let k = self.basis.len();
        let mut c = [0.0; 16];
        let mut p = [0.0; 16];
        if k > c.len() {
            let mut c = vec![0.0; k];
            let mut p = vec![0.0; k];
            self.stages[t].evaluate((x, a), &mut c);
            self.basis.evaluate(eps, &mut p);
            return c.iter().zip(&p).map(|(a, b)| a * b).sum();
        }
        self.stages[t].evaluate((x, a), &mut c[..k]);
        self.basis.evaluate(eps, &mut p[..k]);
        c[..k].iter().zip(&p[..k]).map(|(a, b)| a * b).sum()
    }

    /// Interpolated coefficients `c~(x, a)` at stage `t`.
    pub fn coefficients(&self, t: usize, x: f64, a: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.basis.len()];
        self.stages[t].evaluate((x, a), &mut c);
        c
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(s)?;
        if d.schema_version != DUAL_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported dual martingale schema version {}",
                d.schema_version
            )));
        }
        Ok(d)
    }
}

impl PenaltyFamily for DualMartingale {
    fn penalty(&self, t: usize, x: f64, a: f64, eps: f64, _next: f64) -> f64 {
        self.eta(t, x, a, eps)
    }

    fn label(&self) -> &'static str {
        "noise-basis"
    }

    fn audit_points(&self, t: usize) -> Vec<(f64, f64)> {
        self.stages[t].points.clone()
    }
}

fn check_basis(model: &MdpModel, basis: &NoiseBasis, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("inner sample count M must be at least 1"));
    }
    if !basis.matches_law(model.noise()) {
        return Err(Error::invalid("noise basis does not belong to the model's noise law"));
    }
    Ok(())
}

/// The stage-`t` noise block `eps~_1..eps~_M`, shared by all grid points.
fn noise_block(model: &MdpModel, t: usize, m: usize, seed: u64) -> Vec<f64> {
    let streams = Streams::new(seed);
    (0..m as u64)
        .map(|i| model.noise().sample(&mut streams.at(i, t as u64 + 1)))
        .collect()
}

/// `c_{K,M}(x, a) = (1/M) sum_m V_{t+1}(K_{t+1}(x, a, eps~_m)) Sigma_E^{-1} psi_K(eps~_m)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_dual_coeffs(
    model: &MdpModel,
    v_next: &(dyn Fn(f64) -> f64 + Sync),
    basis: &NoiseBasis,
    x: f64,
    a: f64,
    t: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(estimate_dual_coeffs_grid(model, v_next, basis, &[(x, a)], t, m, seed)?.remove(0))
}

/// [`estimate_dual_coeffs`] at every grid point, with one noise block.
pub fn estimate_dual_coeffs_grid(
    model: &MdpModel,
    v_next: &(dyn Fn(f64) -> f64 + Sync),
    basis: &NoiseBasis,
    points: &[(f64, f64)],
    t: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_basis(model, basis, m)?;
    if t >= model.horizon() {
        return Err(Error::StageOutOfRange {
            stage: t + 1,
            horizon: model.horizon(),
        });
    }
    let k = basis.len();
    let block = noise_block(model, t, m, seed);
    let psi: Vec<Vec<f64>> = block
        .iter()
        .map(|&e| {
            let mut p = vec![0.0; k];
            basis.evaluate(e, &mut p);
            basis.sigma_inverse_apply(&mut p);
            p
        })
        .collect();
    Ok(points
        .par_iter()
        .map(|&(x, a)| {
            let mut acc = vec![CompensatedSum::default(); k];
            for (&e, p) in block.iter().zip(&psi) {
                let z = v_next(model.kernel(t + 1, x, a, e));
                for (s, pk) in acc.iter_mut().zip(p) {
                    s.add(z * pk);
                }
            }
            acc.iter().map(|s| s.value() / m as f64).collect()
        })
        .collect())
}

/// Population coefficients `c_K(x, a) = Sigma_E^{-1} E[V_{t+1}(K_{t+1}(x, a, eps)) psi_K(eps)]`:
/// an exact sum for finite noise, a fine Simpson rule on `[-9, 9]` for
/// Gaussian noise (robust to kinks from clipping and maxima).
pub fn population_dual_coeffs(
    model: &MdpModel,
    v_next: &(dyn Fn(f64) -> f64 + Sync),
    basis: &NoiseBasis,
    x: f64,
    a: f64,
    t: usize,
) -> Result<Vec<f64>> {
    check_basis(model, basis, 1)?;
    let k = basis.len();
    let mut p = vec![0.0; k];
    let mut c: Vec<f64> = (0..k)
        .map(|j| {
            let f = |e: f64| {
                basis.evaluate(e, &mut p);
                v_next(model.kernel(t + 1, x, a, e)) * p[j]
            };
            match model.noise() {
                NoiseLaw::StandardNormal => normal_expect_simpson(9.0, 18_000, f),
                law => law.expect(f),
            }
        })
        .collect();
    basis.sigma_inverse_apply(&mut c);
    Ok(c)
}

/// Fits `c_{K,M}` on `S_L x A_eval` at every stage and wraps each coefficient
/// in a central interpolant.
pub fn build_dual_martingale(
    model: &MdpModel,
    values: &dyn ValueSource,
    basis: &NoiseBasis,
    grid: &GridSpec,
    m: usize,
    mode: LipschitzMode,
    seed: u64,
) -> Result<DualMartingale> {
    check_basis(model, basis, m)?;
    if values.horizon() != model.horizon() {
        return Err(Error::invalid("value source horizon differs from the model"));
    }
    let points = grid.points(model)?;
    let k = basis.len();
    let stages = (0..model.horizon())
        .map(|t| {
            let v_next = |y: f64| values.value(t + 1, y);
            let coeffs = estimate_dual_coeffs_grid(model, &v_next, basis, &points, t, m, seed)?;
            let lip = resolve_lipschitz(
                mode,
                || values.lipschitz(t + 1).map(|lv| lv * model.lipschitz().kernel * basis.lambda_bound()),
                &points,
                &coeffs,
                k,
                model,
            )?;
            CoefficientField::new(points.clone(), coeffs, lip, *model.metric())
        })
        .collect::<Result<_>>()?;
    Ok(DualMartingale {
        schema_version: DUAL_SCHEMA_VERSION,
        basis: basis.clone(),
        inner_samples: m,
        seed,
        lipschitz_mode: mode,
        stages,
    })
}
