use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_lipschitz, CoefficientField, GridSpec, LipschitzMode, PenaltyFamily, ValueSource};
use crate::error::{Error, Result};
use crate::mdp::{GaussianKernel, MdpModel, NoiseLaw};
use crate::rng::Streams;

const DAMPING: f64 = 1e-10;

/// Vector fields `phi_j` in the standardized coordinate
/// `u = (y - mean(x, a)) / sigma`: the constant `1`, then `sin(k u)` and
/// `cos(k u)` for `k = 1..=harmonics`. All are bounded with bounded
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreFeatures {
    pub harmonics: usize,
}

impl ScoreFeatures {
    pub fn len(&self) -> usize {
        1 + 2 * self.harmonics
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `m_{phi_j}(y) = <d/dy log p(y), phi_j> + d/dy phi_j`, with `y = mean + sigma u`.
    pub fn evaluate(&self, u: f64, sigma: f64, out: &mut [f64]) {
        // score = -u / sigma; d/dy = (1 / sigma) d/du
        out[0] = -u / sigma;
        for k in 1..=self.harmonics {
            let kf = k as f64;
            let (s, c) = (kf * u).sin_cos();
            out[2 * k - 1] = (-u * s + kf * c) / sigma;
            out[2 * k] = (-u * c - kf * s) / sigma;
        }
    }
}

/// `m(y; x, a) = sum_j c~_j(x, a) m_{phi_j}(y; x, a)` per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMartingale {
    pub kernel: GaussianKernel,
    pub features: ScoreFeatures,
    pub inner_samples: usize,
    pub seed: u64,
    pub stages: Vec<CoefficientField>,
    /// `(stage, grid index)` pairs whose normal equations were singular;
    /// their coefficients were set to zero.
    pub singular: Vec<(usize, usize)>,
}

impl ScoreMartingale {
    pub fn evaluate(&self, t: usize, x: f64, a: f64, y: f64) -> f64 {
        let j = self.features.len();
        let mut c = vec![0.0; j];
        let mut f = vec![0.0; j];
        self.stages[t].evaluate((x, a), &mut c);
        let u = (y - self.kernel.mean(x, a)) / self.kernel.sigma;
        self.features.evaluate(u, self.kernel.sigma, &mut f);
        c.iter().zip(&f).map(|(a, b)| a * b).sum()
    }
}

impl PenaltyFamily for ScoreMartingale {
    fn penalty(&self, t: usize, x: f64, a: f64, _eps: f64, next: f64) -> f64 {
        self.evaluate(t, x, a, next)
    }

    fn label(&self) -> &'static str {
        "score"
    }

    fn audit_points(&self, t: usize) -> Vec<(f64, f64)> {
        self.stages[t].points.clone()
    }
}

fn check_gaussian(model: &MdpModel) -> Result<GaussianKernel> {
    let g = *model
        .gaussian_kernel()
        .ok_or_else(|| Error::invalid("score martingale needs a declared Gaussian kernel"))?;
    if !matches!(model.noise(), NoiseLaw::StandardNormal) || !(g.sigma > 0.0) {
        return Err(Error::invalid("score martingale needs standard normal noise and sigma > 0"));
    }
    for t in 1..=model.horizon() {
        for &(x, a, e) in &[(0.3, model.eval_actions()[0], -1.1), (-1.7, model.eval_actions()[0], 0.6)] {
            let y = model.kernel(t, x, a, e);
            if (y - (g.mean(x, a) + g.sigma * e)).abs() > 1e-9 * (1.0 + y.abs()) {
                return Err(Error::invalid("model kernel disagrees with its declared Gaussian kernel"));
            }
        }
    }
    Ok(g)
}

/// Least-squares fit of `V_{t+1}(Y)` onto `span{m_{phi_j}}` from `M` draws
/// `Y = K_{t+1}(x, a, eps)` at each grid point (one noise block per stage),
/// via Tikhonov-damped normal equations.
pub fn fit_score_martingale(
    model: &MdpModel,
    values: &dyn ValueSource,
    features: ScoreFeatures,
    grid: &GridSpec,
    m: usize,
    mode: LipschitzMode,
    seed: u64,
) -> Result<ScoreMartingale> {
    if m == 0 {
        return Err(Error::invalid("inner sample count M must be at least 1"));
    }
    if mode == LipschitzMode::Theoretical {
        return Err(Error::invalid("score martingale has no theoretical interpolation constant"));
    }
    let g = check_gaussian(model)?;
    let points = grid.points(model)?;
    let j = features.len();
    let streams = Streams::new(seed);
    let mut singular = Vec::new();
    let mut stages = Vec::with_capacity(model.horizon());
    for t in 0..model.horizon() {
        let block: Vec<f64> = (0..m as u64)
            .map(|i| model.noise().sample(&mut streams.at(i, t as u64 + 1)))
            .collect();
        // the feature matrix depends on eps only
        let mut design = DMatrix::zeros(m, j);
        let mut row = vec![0.0; j];
        for (i, &e) in block.iter().enumerate() {
            features.evaluate(e, g.sigma, &mut row);
            for (c, v) in row.iter().enumerate() {
                design[(i, c)] = *v;
            }
        }
        let gram = design.transpose() * &design / m as f64 + DMatrix::identity(j, j) * DAMPING;
        let chol = gram.cholesky();
        let fits: Vec<Option<Vec<f64>>> = points
            .par_iter()
            .map(|&(x, a)| {
                let chol = chol.as_ref()?;
                let target = DVector::from_iterator(
                    m,
                    block.iter().map(|&e| values.value(t + 1, model.kernel(t + 1, x, a, e))),
                );
                let rhs = design.transpose() * target / m as f64;
                let c = chol.solve(&rhs);
                c.iter().all(|v| v.is_finite()).then(|| c.iter().copied().collect())
            })
            .collect();
        let coeffs: Vec<Vec<f64>> = fits
            .into_iter()
            .enumerate()
            .map(|(l, c)| {
                c.unwrap_or_else(|| {
                    singular.push((t, l));
                    vec![0.0; j]
                })
            })
            .collect();
        let lip = resolve_lipschitz(mode, || None, &points, &coeffs, j, model)?;
        stages.push(CoefficientField::new(points.clone(), coeffs, lip, *model.metric())?);
    }
    Ok(ScoreMartingale {
        kernel: g,
        features,
        inner_samples: m,
        seed,
        stages,
        singular,
    })
}
