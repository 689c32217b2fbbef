//! Small numerical helpers shared across modules.

use std::sync::OnceLock;

use gauss_quad::hermite::GaussHermite;

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean and standard error (sample std / sqrt(n)); the error is 0 for n <= 1.
pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, sd / (n as f64).sqrt())
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    let (_, se) = mean_and_std_err(values);
    se * (values.len() as f64).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Gauss-Hermite rule for expectations under the standard normal law.
#[derive(Debug, Clone)]
pub struct NormalQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalQuadrature {
    pub fn new(points: usize) -> Self {
        let rule = GaussHermite::new(points.max(2)).expect("at least two nodes");
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    /// Shared 64-node rule.
    pub fn standard() -> &'static NormalQuadrature {
        static RULE: OnceLock<NormalQuadrature> = OnceLock::new();
        RULE.get_or_init(|| NormalQuadrature::new(64))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }
}

/// Composite Simpson rule for `E[f(Z)]`, `Z ~ N(0, 1)`, truncated to `[-bound, bound]`.
///
/// Used where the integrand has kinks, for which Gauss-Hermite converges slowly.
pub fn normal_expect_simpson(bound: f64, intervals: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = 2.0 * bound / n as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = CompensatedSum::default();
    for i in 0..=n {
        let z = -bound + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc.add(w * norm * (-0.5 * z * z).exp() * f(z));
    }
    acc.value() * h / 3.0
}
