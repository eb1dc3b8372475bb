mod common;

use garch_stable::garch::simulate;
use garch_stable::qmle::{
    fit, likelihood_gradient, log_likelihood, CompactSetK, OptimizerSettings, FEASIBILITY_TOL,
};
use garch_stable::{GarchParams, InnovationModel, SeedSpec};
use proptest::prelude::*;

#[test]
fn likelihood_matches_naive_oracle() {
    let mut rng = common::rng(99);
    for _ in 0..50 {
        let params = common::random_params(&mut rng, (1, 3), (0, 3));
        let x = common::random_series(&mut rng, 300);
        let ll = log_likelihood(&x, &params).unwrap();
        let naive = common::naive_loglik(&x, &params.alpha, &params.beta);
        assert!((ll - naive).abs() <= 1e-12 * naive.abs(), "{ll} vs {naive}");
    }
}

#[test]
fn score_matches_finite_differences() {
    let mut rng = common::rng(7);
    for _ in 0..30 {
        let params = common::random_params(&mut rng, (1, 3), (0, 3));
        let (p, q) = (params.p(), params.q());
        let x = common::random_series(&mut rng, 300);
        let g = likelihood_gradient(&x, &params).unwrap();
        let fd = common::central_differences(
            |th| {
                let pr = GarchParams::from_slice(p, q, th).unwrap();
                vec![common::naive_loglik(&x, &pr.alpha, &pr.beta)]
            },
            &params.to_vec(),
        );
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..g.len() {
            let denom = g[i].abs().max(1e-3 * scale);
            assert!((fd[i][0] - g[i]).abs() / denom < 1e-5, "component {i}: {} vs {}", fd[i][0], g[i]);
        }
    }
}

#[test]
fn score_at_truth_is_centered() {
    let theta0 = GarchParams::garch11(0.1, 0.1, 0.8).unwrap();
    let n = 20_000;
    let reps = 40;
    let mut per_rep = Vec::new();
    for r in 0..reps {
        let path = simulate(&theta0, &InnovationModel::Gaussian, n, 2000, SeedSpec::new(31, r)).unwrap();
        let g = likelihood_gradient(&path.x, &theta0).unwrap();
        per_rep.push(g.iter().map(|v| v / n as f64).collect::<Vec<_>>());
    }
    for c in 0..3 {
        let col: Vec<f64> = per_rep.iter().map(|v| v[c]).collect();
        let m = col.iter().sum::<f64>() / reps as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let se = sd / (reps as f64).sqrt();
        assert!(m.abs() <= 3.0 * se, "component {c}: mean {m}, se {se}");
    }
}

fn consistency_fraction(model: InnovationModel, tol: f64, reps: u64) -> f64 {
    let theta0 = GarchParams::garch11(0.1, 0.1, 0.8).unwrap();
    let k = CompactSetK::default_for(1, 1);
    let mut hits = 0;
    for r in 0..reps {
        let path = simulate(&theta0, &model, 20_000, 2000, SeedSpec::new(404, r)).unwrap();
        let res = fit(&path.x, &k, &OptimizerSettings::default()).unwrap();
        assert!(k.contains(&res.theta_hat.to_vec(), FEASIBILITY_TOL));
        let err = res
            .theta_hat
            .to_vec()
            .iter()
            .zip(theta0.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err < tol {
            hits += 1;
        }
    }
    hits as f64 / reps as f64
}

#[test]
fn consistent_under_gaussian_innovations() {
    let frac = consistency_fraction(InnovationModel::Gaussian, 0.05, 100);
    assert!(frac >= 0.95, "{frac}");
}

#[test]
fn consistent_under_student_t_innovations() {
    let frac = consistency_fraction(InnovationModel::student_t(3.0).unwrap(), 0.1, 100);
    assert!(frac >= 0.90, "{frac}");
}

#[test]
fn boundary_truth_still_returns_a_point_of_k() {
    // beta_1 sits exactly on beta_bar
    let theta0 = GarchParams::garch11(0.05, 0.03, 0.95).unwrap();
    let k = CompactSetK::default_for(1, 1);
    let path = simulate(&theta0, &InnovationModel::Gaussian, 2000, 500, SeedSpec::new(3, 0)).unwrap();
    let res = fit(&path.x, &k, &OptimizerSettings::default()).unwrap();
    assert!(k.contains(&res.theta_hat.to_vec(), FEASIBILITY_TOL));
}

#[test]
fn brute_force_grid_never_beats_the_optimum() {
    let theta0 = GarchParams::garch11(0.2, 0.2, 0.5).unwrap();
    let k = CompactSetK::new(0.01, 1.0, 0.95, 1, 1).unwrap();
    for seed in 0..3 {
        let path = simulate(&theta0, &InnovationModel::Gaussian, 200, 500, SeedSpec::new(77, seed)).unwrap();
        let x2: Vec<f64> = path.x.iter().map(|v| v * v).collect();
        let res = fit(&path.x, &k, &OptimizerSettings::default()).unwrap();
        let steps = |lo: f64, hi: f64| -> Vec<f64> {
            let n = ((hi - lo) / 0.01).round() as usize;
            (0..=n).map(|i| lo + 0.01 * i as f64).collect()
        };
        let a0s = steps(0.01, 1.0);
        let a1s = steps(0.01, 1.0);
        let b1s = steps(0.01, 0.95);
        let mut best = f64::NEG_INFINITY;
        let mut h = vec![0.0; x2.len()];
        for &b1 in &b1s {
            for &a0 in &a0s {
                for &a1 in &a1s {
                    // straight-line GARCH(1,1) likelihood
                    let mut prev = a0 / (1.0 - b1);
                    let mut s = 0.0;
                    for t in 0..x2.len() {
                        let v = a0 + if t > 0 { a1 * x2[t - 1] } else { 0.0 } + b1 * prev;
                        h[t] = v;
                        s += x2[t] / v + v.ln();
                        prev = v;
                    }
                    best = best.max(-0.5 * s);
                }
            }
        }
        assert!(best <= res.loglik + 1e-3, "grid {best} vs fit {}", res.loglik);
    }
}

fn small_fit_case() -> impl Strategy<Value = (Vec<f64>, CompactSetK)> {
    (any::<u64>(), 1usize..=2, 0usize..=2).prop_map(|(seed, p, q)| {
        let mut rng = common::rng(seed);
        let theta0 = common::random_params(&mut rng, (p, p), (q, q));
        let n = 50 * theta0.dim() + 100;
        let path = simulate(&theta0, &InnovationModel::Gaussian, n, 200, SeedSpec::new(seed, 0)).unwrap();
        (path.x, CompactSetK::new(0.01, 3.0, 0.9, p, q).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fits_are_feasible_monotone_and_reproducible((x, k) in small_fit_case()) {
        let opts = OptimizerSettings { max_iter: 200, ..OptimizerSettings::default() };
        let a = fit(&x, &k, &opts).unwrap();
        let b = fit(&x, &k, &opts).unwrap();
        prop_assert_eq!(a.theta_hat.to_vec(), b.theta_hat.to_vec());
        prop_assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
        prop_assert!(k.contains(&a.theta_hat.to_vec(), FEASIBILITY_TOL));
        prop_assert!(a.starts_used >= 5);
        for s in &a.starts {
            prop_assert!(k.contains(&s.theta, FEASIBILITY_TOL));
            prop_assert!(s.loglik_trace.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(a.loglik >= s.loglik);
        }
    }

    #[test]
    fn projection_is_feasible(theta in prop::collection::vec(-2.0f64..8.0, 6)) {
        let k = CompactSetK::new(0.02, 4.0, 0.9, 2, 3).unwrap();
        let mut t = theta.clone();
        k.project(&mut t);
        prop_assert!(k.contains(&t, FEASIBILITY_TOL));
    }
}
