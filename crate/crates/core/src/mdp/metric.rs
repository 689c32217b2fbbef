use serde::{Deserialize, Serialize};

/// Metric on a one-dimensional coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointMetric {
    /// `|x - y|`
    Absolute,
    /// 0 if equal, 1 otherwise.
    Discrete,
}

impl PointMetric {
    pub fn distance(self, x: f64, y: f64) -> f64 {
        match self {
            PointMetric::Absolute => (x - y).abs(),
            PointMetric::Discrete => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Norm on R^2 used to combine the state and action distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combiner {
    L1,
    L2,
    Max,
}

impl Combiner {
    pub fn combine(self, ds: f64, da: f64) -> f64 {
        match self {
            Combiner::L1 => ds + da,
            Combiner::L2 => ds.hypot(da),
            Combiner::Max => ds.max(da),
        }
    }
}

/// `rho((x, a), (x', a')) = || (rho_S(x, x'), rho_A(a, a')) ||`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductMetric {
    pub state: PointMetric,
    pub action: PointMetric,
    pub combiner: Combiner,
}

impl Default for ProductMetric {
    fn default() -> Self {
        Self {
            state: PointMetric::Absolute,
            action: PointMetric::Absolute,
            combiner: Combiner::L1,
        }
    }
}

impl ProductMetric {
    pub fn distance(&self, p: (f64, f64), q: (f64, f64)) -> f64 {
        self.combiner
            .combine(self.state.distance(p.0, q.0), self.action.distance(p.1, q.1))
    }
}
