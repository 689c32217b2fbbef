//! Reference dynamic programming on a dense state grid for one-dimensional
//! models driven by standard normal noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{uniform_grid, MdpModel, NoiseLaw, Space};
use crate::error::{Error, Result};
use crate::numeric::normal_expect_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseGridOptions {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Noise integration is truncated to `[-bound, bound]`.
    pub quad_bound: f64,
    pub quad_intervals: usize,
}

impl Default for DenseGridOptions {
    fn default() -> Self {
        Self {
            lo: -6.0,
            hi: 6.0,
            points: 2401,
            quad_bound: 8.5,
            quad_intervals: 1200,
        }
    }
}

/// `V*_h` tabulated on a uniform grid, with flat extrapolation.
#[derive(Debug, Clone)]
pub struct DenseGridSolution {
    model: MdpModel,
    opts: DenseGridOptions,
    grid: Vec<f64>,
    /// `values[h]` on `grid`, `h = 0..H-1`; stage `H` is the terminal reward.
    values: Vec<Vec<f64>>,
}

impl DenseGridSolution {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn interpolate(&self, h: usize, x: f64) -> f64 {
        if h == self.model.horizon() {
            return self.model.terminal(x);
        }
        let v = &self.values[h];
        let n = self.grid.len();
        if x <= self.grid[0] {
            return v[0];
        }
        if x >= self.grid[n - 1] {
            return v[n - 1];
        }
        let step = (self.opts.hi - self.opts.lo) / (n - 1) as f64;
        let pos = (x - self.opts.lo) / step;
        let i = (pos.floor() as usize).min(n - 2);
        let w = pos - i as f64;
        v[i] * (1.0 - w) + v[i + 1] * w
    }

    /// `R_h(x, a) + E[V*_{h+1}(K_{h+1}(x, a, eps))]`.
    pub fn q_value(&self, h: usize, x: f64, a: f64) -> f64 {
        let cont = normal_expect_simpson(self.opts.quad_bound, self.opts.quad_intervals, |e| {
            self.interpolate(h + 1, self.model.kernel(h + 1, x, a, e))
        });
        self.model.reward(h, x, a) + cont
    }

    /// `V*_h(x)`, computed by one Bellman step from the tabulated `V*_{h+1}`.
    pub fn value(&self, h: usize, x: f64) -> f64 {
        if h == self.model.horizon() {
            return self.model.terminal(x);
        }
        self.model
            .eval_actions()
            .iter()
            .map(|&a| self.q_value(h, x, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn solve_dense_grid(model: &MdpModel, opts: DenseGridOptions) -> Result<DenseGridSolution> {
    if !matches!(model.noise(), NoiseLaw::StandardNormal) {
        return Err(Error::invalid("dense-grid solver expects standard normal noise"));
    }
    if !matches!(model.states(), Space::Interval { .. }) {
        return Err(Error::invalid("dense-grid solver expects an interval state space"));
    }
    if opts.points < 2 || !(opts.lo < opts.hi) {
        return Err(Error::invalid("dense grid needs lo < hi and at least two points"));
    }
    let grid = uniform_grid(opts.lo, opts.hi, opts.points);
    let horizon = model.horizon();
    let mut sol = DenseGridSolution {
        model: model.clone(),
        opts,
        grid,
        values: vec![Vec::new(); horizon],
    };
    for h in (0..horizon).rev() {
        let v: Vec<f64> = sol.grid.par_iter().map(|&x| sol.value(h, x)).collect();
        sol.values[h] = v;
    }
    Ok(sol)
}
