#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pdmdp::mdp::MdpModel;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Exact value of a deterministic Markov policy (`policy[t * |S| + i]` is an
/// action index), recursing over every noise atom.
pub fn policy_value(model: &MdpModel, policy: &[usize], t: usize, x: f64) -> f64 {
    if t == model.horizon() {
        return model.terminal(x);
    }
    let states = model.states().points().unwrap();
    let i = states.iter().position(|&s| s == x).unwrap();
    let a = model.eval_actions()[policy[t * states.len() + i]];
    let next: f64 = model
        .noise()
        .enumerate()
        .unwrap()
        .iter()
        .map(|&(e, p)| p * policy_value(model, policy, t + 1, model.kernel(t + 1, x, a, e)))
        .sum();
    model.reward(t, x, a) + next
}

/// Best value over every deterministic Markov policy.
pub fn best_policy_value(model: &MdpModel, x0: f64) -> f64 {
    let slots = model.horizon() * model.states().points().unwrap().len();
    let na = model.eval_actions().len();
    (0..na.pow(slots as u32))
        .map(|mut c| {
            let policy: Vec<usize> = (0..slots)
                .map(|_| {
                    let d = c % na;
                    c /= na;
                    d
                })
                .collect();
            policy_value(model, &policy, 0, x0)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
