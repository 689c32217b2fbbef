use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::basis::{NoiseBasis, ReferenceMeasure, StateBasis};
use crate::mdp::{solve_exact, ActionSpace, GaussianKernel, NoiseLaw, ProductMetric};
use crate::numeric::NormalQuadrature;
use crate::primal::{backward_pass, PrimalOptions};

fn line() -> ProductMetric {
    ProductMetric::default()
}

fn gaussian_walk(h: usize) -> MdpModel {
    MdpModel::builder(h, Space::real_line(), ActionSpace::finite(vec![0.0]))
        .noise(NoiseLaw::StandardNormal)
        .kernel(|_, x, _, e| x + e)
        .gaussian_kernel(GaussianKernel { drift: 0.0, sigma: 1.0 })
        .lipschitz(1.0, 1.0)
        .build()
        .unwrap()
}

fn chain() -> MdpModel {
    MdpModel::builder(4, Space::finite(vec![0.0, 1.0, 2.0]), ActionSpace::finite(vec![0.0, 1.0]))
        .noise(NoiseLaw::rademacher())
        .kernel(|_, x, a, e| (x + a + e).clamp(0.0, 2.0))
        .reward(|_, x, a| 0.5 * (x - 1.0) - 0.35 * a)
        .terminal(|x| x - 1.0)
        .r_max(1.0)
        .lipschitz(0.5, 1.0)
        .build()
        .unwrap()
}

#[test]
fn central_interpolant_hand_example() {
    let g = GridInterpolant::new(vec![(0.0, 0.0), (1.0, 0.0)], vec![0.0, 1.0], 1.0, line()).unwrap();
    let (lo, up) = g.envelopes((0.5, 0.0));
    assert_eq!((lo, up), (0.5, 0.5));
    assert_eq!(central_interpolate(&g, (0.5, 0.0)), 0.5);
    assert_eq!(central_interpolate(&g, (1.0, 0.0)), 1.0);
}

#[test]
fn interpolant_rejects_bad_inputs() {
    assert!(matches!(GridInterpolant::new(vec![], vec![], 1.0, line()), Err(Error::EmptyGrid)));
    assert!(GridInterpolant::new(vec![(0.0, 0.0)], vec![1.0], 0.0, line()).is_err());
}

#[test]
fn covering_radius_examples() {
    let probe: Vec<(f64, f64)> = (0..=10_000).map(|i| (i as f64 / 10_000.0, 0.0)).collect();
    for l in [2usize, 5, 11] {
        let grid: Vec<(f64, f64)> = crate::mdp::uniform_grid(0.0, 1.0, l).into_iter().map(|x| (x, 0.0)).collect();
        let r = covering_radius(&grid, &probe, &line()).unwrap();
        assert!((r - 1.0 / (2.0 * (l - 1) as f64)).abs() < 1e-12);
    }
    assert_eq!(covering_radius(&probe, &probe, &line()).unwrap(), 0.0);
    assert_eq!(covering_radius(&[(0.0, 0.0)], &probe, &line()).unwrap(), 1.0);
    assert!(covering_radius(&[], &probe, &line()).is_err());
}

proptest! {
    #[test]
    fn interpolant_is_lipschitz_and_sandwiched(
        vals in proptest::collection::vec(-1.0f64..1.0, 6),
        p in 0.0f64..1.0,
        q in 0.0f64..1.0,
    ) {
        // build L-consistent grid values from a random 1-Lipschitz walk
        let xs = crate::mdp::uniform_grid(0.0, 1.0, 6);
        let mut f = vec![0.0; 6];
        for i in 1..6 {
            f[i] = f[i - 1] + vals[i] * (xs[i] - xs[i - 1]);
        }
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 0.0)).collect();
        let g = GridInterpolant::new(pts.clone(), f.clone(), 1.0, line()).unwrap();
        for (pt, v) in pts.iter().zip(&f) {
            prop_assert_eq!(g.evaluate(*pt), *v);
        }
        let (ip, iq) = (g.evaluate((p, 0.0)), g.evaluate((q, 0.0)));
        prop_assert!((ip - iq).abs() <= (p - q).abs() * (1.0 + 1e-9) + 1e-15);
        // the piecewise-linear extension is 1-Lipschitz, so it sits between the envelopes
        let lin = {
            let i = ((p * 5.0).floor() as usize).min(4);
            let w = (p - xs[i]) / (xs[i + 1] - xs[i]);
            f[i] * (1.0 - w) + f[i + 1] * w
        };
        let (lo, up) = g.envelopes((p, 0.0));
        prop_assert!(lo <= lin + 1e-12 && lin <= up + 1e-12);
    }
}

#[test]
fn coefficient_field_matches_componentwise_interpolants() {
    let pts = vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)];
    let vals = vec![vec![0.0, 1.0], vec![0.3, -1.0], vec![1.0, 0.0]];
    let f = CoefficientField::new(pts, vals, vec![2.0, 3.0], line()).unwrap();
    let mut out = [0.0; 2];
    for p in [(0.2, 0.0), (0.7, 1.0), (0.5, 1.0)] {
        f.evaluate(p, &mut out);
        for (k, v) in out.iter().enumerate() {
            assert_eq!(*v, central_interpolate(&f.component(k), p));
        }
    }
}

#[test]
fn dual_coeffs_linear_target() {
    // V(z) = z, K = x + eps, psi = (eps): c = E[(x + eps) eps] = 1
    let m = gaussian_walk(1);
    let basis = NoiseBasis::hermite(1).unwrap();
    let big_m = 40_000;
    let c = estimate_dual_coeffs(&m, &|z| z, &basis, 0.7, 0.0, 0, big_m, 3).unwrap();
    assert!((c[0] - 1.0).abs() <= 5.0 / (big_m as f64).sqrt());
    let pop = population_dual_coeffs(&m, &|z| z, &basis, 0.7, 0.0, 0).unwrap();
    assert!((pop[0] - 1.0).abs() < 1e-10);
}

#[test]
fn dual_coeffs_constant_target_vanish() {
    let m = gaussian_walk(1);
    let basis = NoiseBasis::hermite(3).unwrap();
    let big_m = 20_000;
    let c = estimate_dual_coeffs(&m, &|_| 2.0, &basis, 0.0, 0.0, 0, big_m, 4).unwrap();
    assert!(c.iter().all(|v| v.abs() <= 5.0 * 2.0 / (big_m as f64).sqrt()));
    let pop = population_dual_coeffs(&m, &|_| 2.0, &basis, 0.0, 0.0, 0).unwrap();
    assert!(pop.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn dual_coeffs_single_sample_definition() {
    let m = gaussian_walk(1);
    let basis = NoiseBasis::hermite(2).unwrap();
    let v = |z: f64| z * z;
    let c = estimate_dual_coeffs(&m, &v, &basis, 0.4, 0.0, 0, 1, 12).unwrap();
    let e = m.noise().sample(&mut Streams::new(12).at(0, 1));
    let mut p = [0.0; 2];
    basis.evaluate(e, &mut p);
    for k in 0..2 {
        assert_eq!(c[k], v(0.4 + e) * p[k]);
    }
}

#[test]
fn dual_noise_block_is_shared_across_grid_points() {
    let m = gaussian_walk(1);
    let basis = NoiseBasis::hermite(2).unwrap();
    let pts = [(0.0, 0.0), (1.0, 0.0), (-2.0, 0.0)];
    let grid = estimate_dual_coeffs_grid(&m, &|z| z.sin(), &basis, &pts, 0, 500, 6).unwrap();
    for (p, c) in pts.iter().zip(&grid) {
        assert_eq!(&estimate_dual_coeffs(&m, &|z| z.sin(), &basis, p.0, p.1, 0, 500, 6).unwrap(), c);
    }
}

#[test]
fn projection_optimality_of_population_coefficients() {
    let m = gaussian_walk(1);
    let basis = NoiseBasis::hermite(3).unwrap();
    let v = |z: f64| (-z * z).max(-1.0);
    let x = 0.3;
    let c = population_dual_coeffs(&m, &v, &basis, x, 0.0, 0).unwrap();
    let objective = |c: &[f64]| {
        let mut p = [0.0; 3];
        crate::numeric::normal_expect_simpson(9.0, 18_000, |e| {
            basis.evaluate(e, &mut p);
            let fit: f64 = c.iter().zip(&p).map(|(a, b)| a * b).sum();
            (v(x + e) - fit).powi(2)
        })
    };
    let base = objective(&c);
    for k in 0..3 {
        for d in [-1e-3, 1e-3] {
            let mut cp = c.clone();
            cp[k] += d;
            assert!(objective(&cp) > base);
        }
    }
}

#[test]
fn full_grid_on_finite_space_has_no_interpolation_error() {
    let m = chain();
    let mu = ReferenceMeasure::uniform(vec![0.0, 1.0, 2.0]).unwrap();
    let sb = StateBasis::indicator(vec![0.0, 1.0, 2.0], vec![1.0 / 3.0; 3]).unwrap();
    let primal = backward_pass(&m, &sb, &mu, PrimalOptions { samples: 256, final_stage_mc: None }, 1).unwrap();
    let nb = NoiseBasis::for_law(m.noise(), 1).unwrap();
    let d = build_dual_martingale(&m, &primal, &nb, &GridSpec::Full, 128, LipschitzMode::Theoretical, 2).unwrap();
    for t in 0..4 {
        let v_next = |y: f64| primal.value(t + 1, y);
        for x in [0.0, 1.0, 2.0] {
            for a in [0.0, 1.0] {
                let direct = estimate_dual_coeffs(&m, &v_next, &nb, x, a, t, 128, 2).unwrap();
                assert_eq!(d.coefficients(t, x, a), direct);
            }
        }
    }
    assert!(audit_zero_mean(&m, &d, &default_audit_points(&m), 1e-12).is_ok());
}

#[test]
fn deterministic_kernel_population_coefficients_vanish() {
    let m = MdpModel::builder(2, Space::finite(vec![0.0, 1.0]), ActionSpace::finite(vec![0.0, 1.0]))
        .noise(NoiseLaw::rademacher())
        .kernel(|_, _, a, _| a)
        .terminal(|x| x)
        .r_max(1.0)
        .build()
        .unwrap();
    let nb = NoiseBasis::indicator(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
    for x in [0.0, 1.0] {
        for a in [0.0, 1.0] {
            let c = population_dual_coeffs(&m, &|y| 3.0 * y - 1.0, &nb, x, a, 0).unwrap();
            assert_eq!(c, vec![0.0]);
        }
    }
}

#[test]
fn dual_martingale_json_round_trip_is_bit_exact() {
    let m = MdpModel::builder(2, Space::real_line(), ActionSpace::interval(-1.0, 1.0, 3).unwrap())
        .noise(NoiseLaw::StandardNormal)
        .kernel(|_, x, a, e| x + 0.3 * a + 0.5 * e)
        .reward(|_, x, _| (-x * x).max(-1.0))
        .terminal(|x| (-x * x).max(-1.0))
        .r_max(1.0)
        .lipschitz(2.0, 1.0)
        .build()
        .unwrap();
    let mu = ReferenceMeasure::gaussian(2.0, 0.0).unwrap();
    let primal = backward_pass(&m, &StateBasis::hermite(3).unwrap(), &mu, PrimalOptions { samples: 300, final_stage_mc: None }, 1).unwrap();
    let grid = GridSpec::Uniform { lo: -2.0, hi: 2.0, points: 9 };
    let nb = NoiseBasis::hermite(3).unwrap();
    let d = build_dual_martingale(&m, &primal, &nb, &grid, 200, LipschitzMode::MaxSlope, 5).unwrap();
    let back = DualMartingale::from_json(&d.to_json().unwrap()).unwrap();
    assert_eq!(back, d);
    for (s, t) in d.stages.iter().zip(&back.stages) {
        for (u, v) in s.values.iter().flatten().zip(t.values.iter().flatten()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
    let dev = audit_zero_mean(&m, &d, &default_audit_points(&m), 1e-12).unwrap();
    assert!(dev <= 1e-12);
    let theo = build_dual_martingale(&m, &primal, &nb, &grid, 50, LipschitzMode::Theoretical, 5).unwrap();
    assert!(theo.stages[0].lipschitz[0] > 0.0);
}

#[test]
fn exact_penalty_is_centered_and_vanishes_without_noise() {
    let m = chain();
    let exact = solve_exact(&m).unwrap();
    let xi = exact_dual_from_oracle(&m, &exact).unwrap();
    let dev = audit_zero_mean(&m, &xi, &[], 1e-15).unwrap();
    assert!(dev <= 1e-15);

    let det = MdpModel::builder(3, Space::finite(vec![0.0, 1.0, 2.0]), ActionSpace::finite(vec![0.0, 1.0]))
        .kernel(|_, x, a, _| (x + a).min(2.0))
        .reward(|_, x, _| 0.3 * x)
        .terminal(|x| x / 2.0)
        .r_max(1.0)
        .build()
        .unwrap();
    let xi = exact_dual_from_oracle(&det, &solve_exact(&det).unwrap()).unwrap();
    for t in 0..3 {
        for x in [0.0, 1.0, 2.0] {
            for a in [0.0, 1.0] {
                assert_eq!(xi.penalty(t, x, a, 0.0, det.kernel(t + 1, x, a, 0.0)), 0.0);
            }
        }
    }
    let gauss = gaussian_walk(1);
    assert!(matches!(exact_dual_from_oracle(&gauss, &exact), Err(Error::NoiseNotEnumerable)));
}

#[test]
fn score_feature_constant_field() {
    let f = ScoreFeatures { harmonics: 0 };
    let mut out = [0.0];
    f.evaluate(1.5, 1.0, &mut out);
    assert_eq!(out[0], -1.5);
    let mean = NormalQuadrature::standard().expect(|y| {
        f.evaluate(y, 1.0, &mut out);
        out[0]
    });
    assert!(mean.abs() < 1e-14);
}

#[test]
fn score_fit_of_linear_target() {
    // V(y) = y, p = N(x, 1), phi = 1: c = -1 at every (x, a)
    let m = gaussian_walk(1);
    let vals = FnValues { horizon: 1, f: |_: usize, y: f64| y };
    let grid = GridSpec::Uniform { lo: -1.0, hi: 1.0, points: 3 };
    let mut prev = f64::INFINITY;
    for big_m in [100, 10_000] {
        let s = fit_score_martingale(&m, &vals, ScoreFeatures { harmonics: 0 }, &grid, big_m, LipschitzMode::MaxSlope, 7)
            .unwrap();
        // the residual V - c m - E V is (1 + c) eps; c -> -1 as M grows
        let err = s.stages[0].values.iter().map(|v| (v[0] + 1.0).abs()).fold(0.0, f64::max);
        assert!(err < prev.max(1e-12));
        prev = err;
    }
    assert!(prev < 5.0 / 100.0);
}

#[test]
fn score_martingales_have_zero_mean() {
    let m = MdpModel::builder(2, Space::real_line(), ActionSpace::interval(-1.0, 1.0, 3).unwrap())
        .noise(NoiseLaw::StandardNormal)
        .kernel(|_, x, a, e| x + 0.4 * a + 0.6 * e)
        .gaussian_kernel(GaussianKernel { drift: 0.4, sigma: 0.6 })
        .reward(|_, x, _| (-x * x).max(-1.0))
        .terminal(|x| (-x * x).max(-1.0))
        .r_max(1.0)
        .build()
        .unwrap();
    let vals = FnValues { horizon: 2, f: |h: usize, y: f64| if h == 2 { (-y * y).max(-1.0) } else { (y.abs() - 1.0).max(-1.5) } };
    let grid = GridSpec::Uniform { lo: -2.0, hi: 2.0, points: 7 };
    let s = fit_score_martingale(&m, &vals, ScoreFeatures { harmonics: 2 }, &grid, 2000, LipschitzMode::MaxSlope, 8).unwrap();
    assert!(s.singular.is_empty());
    assert!(audit_zero_mean(&m, &s, &default_audit_points(&m), 1e-8).is_ok());
    assert!(fit_score_martingale(&m, &vals, ScoreFeatures { harmonics: 2 }, &grid, 10, LipschitzMode::Theoretical, 8).is_err());
    let wrong = MdpModel::builder(1, Space::real_line(), ActionSpace::finite(vec![0.0]))
        .noise(NoiseLaw::StandardNormal)
        .kernel(|_, x, _, e| x + 2.0 * e)
        .gaussian_kernel(GaussianKernel { drift: 0.0, sigma: 1.0 })
        .build()
        .unwrap();
    let v1 = FnValues { horizon: 1, f: |_: usize, y: f64| y };
    assert!(fit_score_martingale(&wrong, &v1, ScoreFeatures { harmonics: 0 }, &grid, 10, LipschitzMode::MaxSlope, 8).is_err());
}

#[test]
fn grid_specs() {
    let m = chain();
    assert_eq!(GridSpec::Full.points(&m).unwrap().len(), 6);
    let g = gaussian_walk(1);
    assert!(GridSpec::Full.points(&g).is_err());
    let r = GridSpec::Random { lo: -1.0, hi: 1.0, points: 20, seed: 3 }.states(&g).unwrap();
    assert!(r.windows(2).all(|w| w[0] <= w[1]) && r.iter().all(|x| x.abs() <= 1.0));
    assert!(GridSpec::Uniform { lo: 0.0, hi: 1.0, points: 0 }.points(&g).is_err());
}

#[test]
fn interpolation_error_bounded_by_covering_radius() {
    let mut rng = Streams::new(99).at(0, 0);
    let grid: Vec<(f64, f64)> = crate::mdp::uniform_grid(0.0, 1.0, 9).into_iter().map(|x| (x, 0.0)).collect();
    let mesh: Vec<(f64, f64)> = (0..=2000).map(|i| (i as f64 / 2000.0, 0.0)).collect();
    let rho = covering_radius(&grid, &mesh, &line()).unwrap();
    for _ in 0..50 {
        let lip = rng.random_range(0.5..3.0);
        let (w, ph) = (rng.random_range(1.0..6.0), rng.random_range(0.0..6.3));
        let f = |x: f64| lip / w * (w * x + ph).sin();
        let vals: Vec<f64> = grid.iter().map(|p| f(p.0)).collect();
        let g = GridInterpolant::new(grid.clone(), vals, lip, line()).unwrap();
        let err = mesh.iter().map(|p| (f(p.0) - g.evaluate(*p)).abs()).fold(0.0, f64::max);
        assert!(err <= lip * rho + 1e-12);
    }
}
