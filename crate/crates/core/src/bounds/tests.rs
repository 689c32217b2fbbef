use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::basis::ReferenceMeasure;
use crate::dual::{exact_dual_from_oracle, GridSpec, LipschitzMode, ZeroPenalty};
use crate::harness::testbeds::{t1_chain, t3_deterministic, two_state};
use crate::mdp::{solve_exact, ActionSpace, MdpModel, NoiseLaw, Space};
use crate::primal::{PrimalOptions, PrimalSolution};

fn one_step() -> MdpModel {
    MdpModel::builder(1, Space::finite(vec![0.0]), ActionSpace::finite(vec![0.0, 1.0]))
        .kernel(|_, _, _, _| 0.0)
        .reward(|_, _, a| a)
        .terminal(|_| 0.0)
        .r_max(1.0)
        .build()
        .unwrap()
}

fn solve(model: &MdpModel, family: &dyn PenaltyFamily, noise: &[f64], x0: f64) -> PathwiseSolution {
    pathwise_sup(&PathwiseProblem {
        model,
        family,
        noise,
        x0,
        node_cap: DEFAULT_NODE_CAP,
    })
    .unwrap()
}

/// Perfect-information value by listing every action sequence.
fn enumerate_sequences(model: &MdpModel, noise: &[f64], x0: f64) -> f64 {
    let acts = model.eval_actions();
    let h = model.horizon();
    let total = acts.len().pow(h as u32);
    let mut best = f64::NEG_INFINITY;
    for code in 0..total {
        let mut c = code;
        let mut seq = vec![0.0; h];
        for t in (0..h).rev() {
            seq[t] = acts[c % acts.len()];
            c /= acts.len();
        }
        let mut x = x0;
        let mut v = 0.0;
        for (t, &a) in seq.iter().enumerate() {
            v += model.reward(t, x, a);
            x = model.kernel(t + 1, x, a, noise[t]);
        }
        best = best.max(v + model.terminal(x));
    }
    best
}

fn t1_experiment(h: usize, n: usize, m: usize, n_test: usize) -> GapExperiment {
    let model = t1_chain(h).unwrap();
    let oracle = solve_exact(&model).unwrap().value(0, 1.0).unwrap();
    let reference = ReferenceMeasure::uniform(vec![0.0, 1.0, 2.0]).unwrap();
    GapExperiment {
        testbed: "t1".into(),
        fingerprint: "test".into(),
        model,
        x0: 1.0,
        oracle: Some(oracle),
        state_basis: StateBasis::indicator(vec![0.0, 1.0, 2.0], vec![1.0 / 3.0; 3]).unwrap(),
        reference,
        primal: PrimalOptions {
            samples: n,
            final_stage_mc: None,
        },
        penalty: PenaltySpec::NoiseBasis { size: 1 },
        grid: GridSpec::Full,
        inner_samples: m,
        lipschitz: LipschitzMode::Theoretical,
        n_test,
        n_lower: n_test,
        seeds: Seeds {
            primal: 11,
            dual: 12,
            test: 13,
        },
    }
}

#[test]
fn tree_size_counts_all_prefixes() {
    assert_eq!(tree_size(2, 3), 15);
    assert_eq!(tree_size(1, 4), 5);
    assert_eq!(tree_size(10, 0), 1);
}

#[test]
fn one_step_maximum() {
    let model = one_step();
    let s = solve(&model, &ZeroPenalty, &[0.0], 0.0);
    assert_eq!(s.value, 1.0);
    assert_eq!(s.path, vec![1.0]);
}

#[test]
fn ties_resolve_to_lexicographically_smallest_path() {
    let model = MdpModel::builder(2, Space::finite(vec![0.0]), ActionSpace::finite(vec![0.0, 1.0]))
        .kernel(|_, _, _, _| 0.0)
        .reward(|_, _, _| 0.5)
        .terminal(|_| 0.0)
        .r_max(1.0)
        .build()
        .unwrap();
    let s = solve(&model, &ZeroPenalty, &[0.0, 0.0], 0.0);
    assert_eq!(s.path, vec![0.0, 0.0]);
}

#[test]
fn exact_penalty_gives_optimal_value_on_every_noise_sequence() {
    let model = two_state(4).unwrap();
    let exact = solve_exact(&model).unwrap();
    let xi = exact_dual_from_oracle(&model, &exact).unwrap();
    for code in 0..16u32 {
        let noise: Vec<f64> = (0..4).map(|t| if code >> t & 1 == 1 { 1.0 } else { -1.0 }).collect();
        for x0 in [0.0, 1.0] {
            let s = solve(&model, &xi, &noise, x0);
            assert!((s.value - exact.value(0, x0).unwrap()).abs() < 1e-10, "{noise:?} {x0}");
        }
    }
}

#[test]
fn zero_penalty_is_the_perfect_information_relaxation() {
    let model = t1_chain(4).unwrap();
    for n in 0..50 {
        let noise = noise_sequence(&model, n, 5);
        for x0 in [0.0, 1.0, 2.0] {
            let s = solve(&model, &ZeroPenalty, &noise, x0);
            assert!((s.value - enumerate_sequences(&model, &noise, x0)).abs() < 1e-12);
        }
    }
}

#[test]
fn exact_family_upper_bound_has_no_variance() {
    let model = t1_chain(4).unwrap();
    let exact = solve_exact(&model).unwrap();
    let xi = exact_dual_from_oracle(&model, &exact).unwrap();
    let up = upper_bound(&model, &xi, 1.0, 500, 3).unwrap();
    assert!((up.mean - exact.value(0, 1.0).unwrap()).abs() < 1e-10);
    assert!(up.std_err <= 1e-10);
}

#[test]
fn deterministic_model_has_zero_standard_errors() {
    let model = t3_deterministic(3).unwrap();
    let up = upper_bound(&model, &ZeroPenalty, 0.0, 64, 1).unwrap();
    assert_eq!(up.std_err, 0.0);
    let exact = solve_exact(&model).unwrap();
    assert!((up.mean - exact.value(0, 0.0).unwrap()).abs() < 1e-12);
    let mu = ReferenceMeasure::uniform(vec![0.0, 1.0, 2.0, 3.0]).unwrap().stratified();
    let basis = StateBasis::indicator(vec![0.0, 1.0, 2.0, 3.0], vec![0.25; 4]).unwrap();
    let sol = crate::primal::backward_pass(
        &model,
        &basis,
        &mu,
        PrimalOptions {
            samples: 8,
            final_stage_mc: None,
        },
        2,
    )
    .unwrap();
    let low = lower_bound(&model, &sol, 0.0, 64, 4).unwrap();
    assert_eq!(low.std_err, 0.0);
}

#[test]
fn fitted_penalty_stays_above_optimum() {
    let exp = t1_experiment(4, 256, 256, 2048);
    let primal = crate::primal::backward_pass(&exp.model, &exp.state_basis, &exp.reference, exp.primal, 1).unwrap();
    let family = build_penalty(&exp, &primal).unwrap();
    let up = upper_bound(&exp.model, family.as_ref(), 1.0, 2048, 9).unwrap();
    let v = exp.oracle.unwrap();
    assert!(up.mean >= v - 4.0 * up.std_err, "{up:?} vs {v}");
}

#[test]
fn exact_representation_gives_optimal_policy_value() {
    let model = t1_chain(4).unwrap();
    let v = solve_exact(&model).unwrap().value(0, 1.0).unwrap();
    let mu = ReferenceMeasure::uniform(vec![0.0, 1.0, 2.0]).unwrap().stratified();
    let basis = StateBasis::indicator(vec![0.0, 1.0, 2.0], vec![1.0 / 3.0; 3]).unwrap();
    // pair noise with every design state in the stratified block
    let sol = crate::primal::backward_pass(
        &model,
        &basis,
        &mu,
        PrimalOptions {
            samples: 3000,
            final_stage_mc: None,
        },
        8,
    )
    .unwrap();
    let low = lower_bound(&model, &sol, 1.0, 4000, 6).unwrap();
    assert!((low.mean - v).abs() <= 4.0 * low.std_err.max(1e-12), "{low:?} vs {v}");
}

#[test]
fn untrained_coefficients_still_give_a_lower_estimate() {
    let model = t1_chain(4).unwrap();
    let v = solve_exact(&model).unwrap().value(0, 1.0).unwrap();
    let mu = ReferenceMeasure::uniform(vec![0.0, 1.0, 2.0]).unwrap();
    let basis = StateBasis::indicator(vec![0.0, 1.0, 2.0], vec![1.0 / 3.0; 3]).unwrap();
    let mut rng = Streams::new(77).at(0, 0);
    for _ in 0..5 {
        let beta = (0..4)
            .map(|_| (0..2).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())
            .collect();
        let sol = PrimalSolution::from_coefficients(&model, &basis, &mu, beta).unwrap();
        let low = lower_bound(&model, &sol, 1.0, 2000, rng.random()).unwrap();
        assert!(low.mean <= v + 4.0 * low.std_err, "{low:?} vs {v}");
    }
}

#[test]
fn node_cap_is_enforced() {
    let model = t1_chain(5).unwrap();
    let err = pathwise_sup(&PathwiseProblem {
        model: &model,
        family: &ZeroPenalty,
        noise: &[1.0; 5],
        x0: 1.0,
        node_cap: 62,
    })
    .unwrap_err();
    assert!(matches!(err, Error::NodeCapExceeded { nodes: 63, cap: 62 }));
}

#[test]
fn wrong_noise_length_is_rejected() {
    let model = t1_chain(3).unwrap();
    let r = pathwise_sup(&PathwiseProblem {
        model: &model,
        family: &ZeroPenalty,
        noise: &[1.0; 2],
        x0: 1.0,
        node_cap: DEFAULT_NODE_CAP,
    });
    assert!(r.is_err());
}

struct Biased;

impl PenaltyFamily for Biased {
    fn penalty(&self, _: usize, _: f64, _: f64, eps: f64, _: f64) -> f64 {
        eps + 0.1
    }

    fn label(&self) -> &'static str {
        "biased"
    }
}

#[test]
fn biased_family_is_refused() {
    let model = t1_chain(3).unwrap();
    let err = upper_bound(&model, &Biased, 1.0, 10, 1).unwrap_err();
    assert!(matches!(err, Error::NotZeroMean { .. }));
}

#[test]
fn penalties_tighten_the_relaxation() {
    let exp = t1_experiment(4, 512, 512, 2048);
    let primal = crate::primal::backward_pass(&exp.model, &exp.state_basis, &exp.reference, exp.primal, 2).unwrap();
    let fitted = build_penalty(&exp, &primal).unwrap();
    let up_fit = upper_bound(&exp.model, fitted.as_ref(), 1.0, 2048, 21).unwrap();
    let up_zero = upper_bound(&exp.model, &ZeroPenalty, 1.0, 2048, 21).unwrap();
    let se = (up_fit.std_err.powi(2) + up_zero.std_err.powi(2)).sqrt();
    assert!(up_zero.mean >= up_fit.mean - 4.0 * se);
}

#[test]
fn gap_experiment_sandwiches_the_oracle_and_replays() {
    let exp = t1_experiment(4, 1024, 1024, 1024);
    let (a, _) = duality_gap_experiment(&exp).unwrap();
    assert_eq!(a.sandwich_holds(), Some(true), "{a:?}");
    assert!(a.gap >= -4.0 * (a.lower.std_err + a.upper.std_err));
    assert_eq!(a.parameters.l, 6);
    let (b, _) = duality_gap_experiment(&exp).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn failures_name_the_stage() {
    let mut exp = t1_experiment(3, 64, 64, 64);
    exp.n_lower = 0;
    match duality_gap_experiment(&exp).unwrap_err() {
        Error::Stage { stage, .. } => assert_eq!(stage, "lower"),
        e => panic!("unexpected {e}"),
    }
    let mut exp = t1_experiment(3, 64, 64, 64);
    exp.inner_samples = 0;
    match duality_gap_experiment(&exp).unwrap_err() {
        Error::Stage { stage, .. } => assert_eq!(stage, "dual"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn degenerate_noise_uses_the_zero_penalty() {
    let mut exp = t1_experiment(3, 64, 64, 64);
    exp.model = t3_deterministic(3).unwrap();
    exp.x0 = 0.0;
    exp.reference = ReferenceMeasure::uniform(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    exp.state_basis = StateBasis::indicator(vec![0.0, 1.0, 2.0, 3.0], vec![0.25; 4]).unwrap();
    let primal = crate::primal::backward_pass(&exp.model, &exp.state_basis, &exp.reference, exp.primal, 1).unwrap();
    assert_eq!(build_penalty(&exp, &primal).unwrap().label(), "zero");
}

fn walk(actions: Vec<f64>) -> MdpModel {
    MdpModel::builder(3, Space::real_line(), ActionSpace::finite(actions))
        .noise(NoiseLaw::rademacher())
        .kernel(|_, x, a, e| x + 0.5 * a + 0.3 * e)
        .reward(|_, x, a| (-(x * x) + a.sin()).max(-2.0))
        .terminal(|x| (-(x * x)).max(-2.0))
        .r_max(2.0)
        .build()
        .unwrap()
}

proptest! {
    #[test]
    fn adding_an_action_never_lowers_the_pathwise_value(
        signs in proptest::collection::vec(any::<bool>(), 3),
        extra in -2.0f64..2.0,
        x0 in -1.0f64..1.0,
    ) {
        let noise: Vec<f64> = signs.iter().map(|&s| if s { 1.0 } else { -1.0 }).collect();
        let small = walk(vec![-1.0, 1.0]);
        let big = walk(vec![-1.0, 1.0, extra]);
        let a = solve(&small, &ZeroPenalty, &noise, x0).value;
        let b = solve(&big, &ZeroPenalty, &noise, x0).value;
        prop_assert!(b >= a);
    }
}
