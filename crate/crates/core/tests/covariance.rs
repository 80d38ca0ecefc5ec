mod common;

use approx::assert_abs_diff_eq;
use common::*;
use mvtc_core::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn series_matches_lyapunov_solution_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..30 {
        let model = random_linked_model(&mut rng).model;
        let table = lagged_covariance(&model, 10, DEFAULT_SERIES_TOL).unwrap();
        for (tau, oracle) in lyapunov_gammas(&model, 10).iter().enumerate() {
            let diff = (table.gamma(tau).unwrap() - oracle).norm();
            assert!(diff < 1e-10 * oracle.norm().max(1.0), "lag {tau}: {diff:e}");
        }
        assert!(table.truncation_error() < 1e-12);
    }
}

#[test]
fn bivariate_reference_values() {
    let table = lagged_covariance(&bivariate(0.5, 0.4, 0.3), 1, DEFAULT_SERIES_TOL).unwrap();
    let g0 = table.gamma(0).unwrap();
    assert_abs_diff_eq!(g0[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(g0[(0, 1)], 0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(g0[(1, 1)], 1.4047619047619047, epsilon = 1e-12);
}

#[test]
fn cross_correlation_lag_function_of_oracle() {
    // corr(X_{t-tau}, Y_t), tau = 0..10, from the Lyapunov solution
    let expected_weak = [0.1827, 0.3653, 0.2923, 0.19, 0.1125, 0.0633, 0.0344, 0.0183, 0.0096, 0.005, 0.0026];
    let expected_strong = [0.6053, 0.6725, 0.7203, 0.7517, 0.7697, 0.7766, 0.7744, 0.7648, 0.7495, 0.7295, 0.7061];
    for (model, expected) in [(bivariate(0.5, 0.4, 0.3), expected_weak), (bivariate(0.9, 0.9, 0.3), expected_strong)] {
        for (tau, want) in expected.iter().enumerate() {
            let got = analytic_cross_correlation(&model, 0, 1, tau).unwrap();
            assert_abs_diff_eq!(got, *want, epsilon = 6e-5);
        }
    }
}

#[test]
fn sample_covariance_converges() {
    let model = bivariate(0.9, 0.9, 0.3);
    let data = simulate(&model, 400_000, 3, None).unwrap();
    let oracle = lyapunov_gammas(&model, 5);
    for (tau, g) in oracle.iter().enumerate() {
        let rel = (sample_gamma(&data, tau) - g).norm() / g.norm();
        assert!(rel < 0.08, "lag {tau}: {rel}");
    }
}

#[test]
fn psi_paths_of_the_sidepath_model() {
    // X -> W -> Y in two steps plus the direct X -> Y link at lag 2
    let p = psi(&sidepath_model(0.5, 0.4, 0.6), 4);
    assert_abs_diff_eq!(p.get(2).unwrap()[(2, 0)], 0.5 + 0.4 * 0.6, epsilon = 1e-15);
    assert_eq!(p.get(3).unwrap()[(2, 0)], 0.0);
    assert_eq!(p.get(4).unwrap().norm(), 0.0);
}
