use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::ProductMetric;

/// Optimal central interpolant of scattered values on `S x A`.
///
/// `I[f](p) = (H_low(p) + H_up(p)) / 2` with
/// `H_low(p) = max_l (f_l - L rho(p, p_l))` and
/// `H_up(p) = min_l (f_l + L rho(p, p_l))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInterpolant {
    pub points: Vec<(f64, f64)>,
    pub values: Vec<f64>,
    pub lipschitz: f64,
    pub metric: ProductMetric,
}

impl GridInterpolant {
    pub fn new(points: Vec<(f64, f64)>, values: Vec<f64>, lipschitz: f64, metric: ProductMetric) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if points.len() != values.len() {
            return Err(Error::invalid("grid points and values differ in length"));
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::invalid(format!("interpolation constant must be positive, got {lipschitz}")));
        }
        Ok(Self {
            points,
            values,
            lipschitz,
            metric,
        })
    }

    /// `(H_low(p), H_up(p))`.
    pub fn envelopes(&self, p: (f64, f64)) -> (f64, f64) {
        let mut low = f64::NEG_INFINITY;
        let mut up = f64::INFINITY;
        for (q, f) in self.points.iter().zip(&self.values) {
            let d = self.lipschitz * self.metric.distance(p, *q);
            low = low.max(f - d);
            up = up.min(f + d);
        }
        (low, up)
    }

    pub fn evaluate(&self, p: (f64, f64)) -> f64 {
        central_interpolate(self, p)
    }
}

/// Evaluates the central interpolant; grid points return their own value.
pub fn central_interpolate(grid: &GridInterpolant, p: (f64, f64)) -> f64 {
    if let Some(l) = grid.points.iter().position(|&q| q == p) {
        return grid.values[l];
    }
    let (low, up) = grid.envelopes(p);
    0.5 * (low + up)
}

/// `max_probe min_grid rho`: a lower estimate of the covering radius.
pub fn covering_radius(grid: &[(f64, f64)], probe: &[(f64, f64)], metric: &ProductMetric) -> Result<f64> {
    if grid.is_empty() || probe.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(probe
        .iter()
        .map(|&p| {
            grid.iter()
                .map(|&q| metric.distance(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max))
}

/// Several interpolated coefficient functions on one shared grid; distances
/// are computed once per query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub points: Vec<(f64, f64)>,
    /// `values[l][k]`: coefficient `k` at grid point `l`.
    pub values: Vec<Vec<f64>>,
    /// One interpolation constant per coefficient.
    pub lipschitz: Vec<f64>,
    pub metric: ProductMetric,
}

impl CoefficientField {
    pub fn new(
        points: Vec<(f64, f64)>,
        values: Vec<Vec<f64>>,
        lipschitz: Vec<f64>,
        metric: ProductMetric,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let k = lipschitz.len();
        if points.len() != values.len() || values.iter().any(|v| v.len() != k) {
            return Err(Error::invalid("coefficient table does not match the grid"));
        }
        if lipschitz.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid("interpolation constants must be positive and finite"));
        }
        Ok(Self {
            points,
            values,
            lipschitz,
            metric,
        })
    }

    pub fn len(&self) -> usize {
        self.lipschitz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lipschitz.is_empty()
    }

    /// Interpolant of coefficient `k` alone.
    pub fn component(&self, k: usize) -> GridInterpolant {
        GridInterpolant {
            points: self.points.clone(),
            values: self.values.iter().map(|v| v[k]).collect(),
            lipschitz: self.lipschitz[k],
            metric: self.metric,
        }
    }

    /// All interpolated coefficients at `p`, written into `out`.
    pub fn evaluate(&self, p: (f64, f64), out: &mut [f64]) {
        if let Some(l) = self.points.iter().position(|&q| q == p) {
            out.copy_from_slice(&self.values[l]);
            return;
        }
        let k = self.len();
        let mut low = [f64::NEG_INFINITY; 16];
        let mut up = [f64::INFINITY; 16];
        if k > low.len() {
            for (j, o) in out.iter_mut().enumerate() {
                *o = central_interpolate(&self.component(j), p);
            }
            return;
        }
        for (q, vals) in self.points.iter().zip(&self.values) {
            let d = self.metric.distance(p, *q);
            for j in 0..k {
                let r = self.lipschitz[j] * d;
                low[j] = low[j].max(vals[j] - r);
                up[j] = up[j].min(vals[j] + r);
            }
        }
        for j in 0..k {
            out[j] = 0.5 * (low[j] + up[j]);
        }
    }
}

/// Largest pairwise slope `|f_l - f_m| / rho(p_l, p_m)` over the grid.
pub fn max_grid_slope(points: &[(f64, f64)], values: &[f64], metric: &ProductMetric) -> f64 {
    let mut best: f64 = 0.0;
    for l in 0..points.len() {
        for m in 0..l {
            let d = metric.distance(points[l], points[m]);
            if d > 0.0 {
                best = best.max((values[l] - values[m]).abs() / d);
            }
        }
    }
    best
}
