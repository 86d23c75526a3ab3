mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use rand::Rng;

use common::*;
use netcontract::equilibrium::{
    solve_equilibrium_general, solve_equilibrium_general_with, solve_equilibrium_quadratic_binary, spectral_radius,
    EquilibriumOptions,
};
use netcontract::model::{Contract, Network, OutcomeModel, Problem, ProductionFunction, SuccessProbability};
use netcontract::oracle::best_response_iterate_from;
use netcontract::Error;

#[test]
fn zero_contract_gives_zero_effort() {
    let eq = solve_equilibrium_quadratic_binary(&weighted_triangle(0.5), &[1.0; 3], &[0.0; 3], &half_linear()).unwrap();
    assert_eq!(eq.actions.as_slice(), &[0.0; 3]);
    assert_eq!(eq.performance, 0.0);
}

#[test]
fn two_clique_hand_instance() {
    let eq = solve_equilibrium_quadratic_binary(&two_clique(), &[1.0, 1.0], &[0.25, 0.25], &half_linear()).unwrap();
    assert_relative_eq!(eq.actions[0], 1.0 / 7.0, epsilon = 1e-14);
    assert_relative_eq!(eq.actions[1], 1.0 / 7.0, epsilon = 1e-14);
    assert_relative_eq!(eq.performance, 15.0 / 49.0, epsilon = 1e-14);
    assert!(eq.residual < 1e-14);
    assert_relative_eq!(eq.spectral_margin.unwrap(), 1.0 - 0.5 * 0.25, epsilon = 1e-12);
}

#[test]
fn isolated_agent_effort_is_slope_times_payment() {
    let eq = solve_equilibrium_quadratic_binary(&Network::empty(1), &[1.0], &[0.4], &half_linear()).unwrap();
    assert_relative_eq!(eq.actions[0], 0.2, epsilon = 1e-15);
    assert_relative_eq!(eq.performance, 0.2, epsilon = 1e-15);
}

#[test]
fn nonlinear_success_probability_is_solved_by_bisection() {
    let p = SuccessProbability::Power { r: 1.0 };
    let tau = [0.3, 0.2, 0.25];
    let eq = solve_equilibrium_quadratic_binary(&weighted_triangle(0.5), &[1.0; 3], &tau, &p).unwrap();
    assert!(eq.residual < 1e-10);
    let problem = Problem::quadratic_binary(weighted_triangle(0.5), None, p);
    let general = solve_equilibrium_general(&problem, &Contract::success_only(&tau), &[0.0; 3]).unwrap();
    assert!(max_abs_diff(eq.actions.as_slice(), general.actions.as_slice()) < 1e-8);
}

#[test]
fn strong_complementarities_have_no_equilibrium() {
    let net = Network::from_edges(2, &[(0, 1, 5.0)]);
    let err = solve_equilibrium_quadratic_binary(&net, &[1.0, 1.0], &[1.0, 1.0], &half_linear()).unwrap_err();
    assert!(matches!(err, Error::NoEquilibrium(_)));
}

#[test]
fn convex_success_probability_is_rejected() {
    let p = SuccessProbability::Logistic { scale: 1.0, shift: 2.0 };
    let err = solve_equilibrium_quadratic_binary(&two_clique(), &[1.0, 1.0], &[0.2, 0.2], &p).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn general_solver_matches_the_specialized_solver() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    let eq = solve_equilibrium_general(&problem, &Contract::success_only(&[0.25, 0.25]), &[0.0, 0.0]).unwrap();
    assert!(max_abs_diff(eq.actions.as_slice(), &[1.0 / 7.0, 1.0 / 7.0]) < 1e-8);
    assert_eq!(eq.global_check_passed, Some(true));
    assert!(eq.residual < 1e-9);
}

#[test]
fn cobb_douglas_symmetric_payments_give_symmetric_effort() {
    let problem = Problem::risk_neutral(
        ProductionFunction::CobbDouglas { gamma: vec![0.5, 0.5] },
        OutcomeModel::binary(half_linear()),
    );
    let eq = solve_equilibrium_general(&problem, &Contract::success_only(&[0.3, 0.3]), &[1.0, 0.5]).unwrap();
    assert_relative_eq!(eq.actions[0], eq.actions[1], epsilon = 1e-9);
    assert!(eq.actions[0] > 0.0);
}

#[test]
fn logistic_triangle_converges() {
    let triangle = Network::from_edges(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]);
    let p = SuccessProbability::Logistic { scale: 1.0, shift: -0.5 };
    let problem = Problem::quadratic_binary(triangle, None, p);
    let eq = solve_equilibrium_general(&problem, &Contract::success_only(&[0.2, 0.2, 0.2]), &[0.0; 3]).unwrap();
    assert!(eq.residual < 1e-9);
    assert_eq!(eq.global_check_passed, Some(true));
}

#[test]
fn unpaid_agents_exert_no_effort() {
    let problem = Problem::quadratic_binary(weighted_triangle(0.5), None, half_linear());
    let eq = solve_equilibrium_general(&problem, &Contract::success_only(&[0.3, 0.0, 0.2]), &[0.5; 3]).unwrap();
    assert_eq!(eq.actions[1], 0.0);
    assert!(eq.actions[0] > 0.0 && eq.actions[2] > 0.0);
}

#[test]
fn sweep_limit_is_reported() {
    let problem = Problem::quadratic_binary(weighted_triangle(0.5), None, half_linear());
    let opts = EquilibriumOptions { max_sweeps: 1, tol: 1e-15, ..EquilibriumOptions::default() };
    let err = solve_equilibrium_general_with(&problem, &Contract::success_only(&[0.3, 0.2, 0.2]), &[0.0; 3], &opts)
        .unwrap_err();
    assert!(matches!(err, Error::NonConvergence { .. }));
}

#[test]
fn negative_initial_profile_is_rejected() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    assert!(solve_equilibrium_general(&problem, &Contract::success_only(&[0.2, 0.2]), &[-1.0, 0.0]).is_err());
}

#[test]
fn spectral_radius_examples() {
    assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)), 0.0);
    assert_relative_eq!(spectral_radius(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])), 1.0, epsilon = 1e-12);
    let mut rng = rng(21);
    for _ in 0..20 {
        let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(0.0..1.0));
        let dense = m.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert_relative_eq!(spectral_radius(&m), dense, max_relative = 1e-10);
    }
}

#[test]
fn spectral_radius_of_rotation_falls_back_to_the_eigensolver() {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
    assert_relative_eq!(spectral_radius(&m), 2.0, epsilon = 1e-12);
    let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    assert_relative_eq!(spectral_radius(&m), 1.0, epsilon = 1e-10);
}

#[test]
fn solution_is_invariant_to_oracle_initialization() {
    let mut rng = rng(22);
    let network = random_network(&mut rng, 4, 0.8);
    let tau = [0.2, 0.1, 0.25, 0.15];
    let p = SuccessProbability::LinearCapped { slope: 0.4 };
    let eq = solve_equilibrium_quadratic_binary(&network, &[1.0; 4], &tau, &p).unwrap();
    let problem = Problem::quadratic_binary(network, None, p);
    let contract = Contract::success_only(&tau);
    for _ in 0..10 {
        let init: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let oracle = best_response_iterate_from(&problem, &contract, &init, 1e-12, 1.0, 10_000).unwrap();
        assert!(max_abs_diff(&oracle.actions, eq.actions.as_slice()) < 1e-9);
    }
}

#[test]
fn performance_weakly_increases_in_every_link() {
    let mut rng = rng(23);
    let p = SuccessProbability::LinearCapped { slope: 0.4 };
    for _ in 0..20 {
        let network = random_network(&mut rng, 4, 0.6);
        let tau: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..0.3)).collect();
        let base = solve_equilibrium_quadratic_binary(&network, &[1.0; 4], &tau, &p).unwrap();
        let (i, j) = (rng.random_range(0..4), rng.random_range(0..4));
        if i == j {
            continue;
        }
        let bumped = network.with_link(i, j, network.link(i, j) + 0.1);
        let after = solve_equilibrium_quadratic_binary(&bumped, &[1.0; 4], &tau, &p).unwrap();
        assert!(after.performance >= base.performance - 1e-12);
    }
}

#[test]
fn returned_equilibria_satisfy_the_spectral_condition() {
    let mut rng = rng(24);
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let network = random_network(&mut rng, n, 1.0);
        let tau: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
        let p = SuccessProbability::LinearCapped { slope: rng.random_range(0.2..0.8) };
        if let Ok(eq) = solve_equilibrium_quadratic_binary(&network, &vec![1.0; n], &tau, &p) {
            assert!(eq.spectral_margin.unwrap() > 0.0);
        }
    }
}

#[test]
fn equilibrium_result_round_trips_through_json() {
    let eq = solve_equilibrium_quadratic_binary(&two_clique(), &[1.0, 1.0], &[0.25, 0.25], &half_linear()).unwrap();
    let text = serde_json::to_string(&eq).unwrap();
    assert_eq!(serde_json::from_str::<netcontract::equilibrium::EquilibriumResult>(&text).unwrap(), eq);
}
