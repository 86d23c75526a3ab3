mod common;

use approx::assert_relative_eq;

use common::*;
use netcontract::contract_opt::{optimize_quadratic_binary, total_share_root, OptimizerOptions};
use netcontract::equilibrium::solve_equilibrium_quadratic_binary;
use netcontract::model::{Contract, Network, OutcomeModel, Problem, SuccessProbability, Utility};
use netcontract::oracle::{
    action_bound, best_response_iterate, best_response_iterate_from, brute_force_optimal_contract,
    brute_force_refined, finite_diff, finite_diff_richardson, OracleError, MAX_GRID_DIMENSION,
};

fn success_bounds(n: usize, hi: f64) -> Vec<(f64, f64)> {
    (0..n).flat_map(|_| [(0.0, 0.0), (0.0, hi)]).collect()
}

#[test]
fn single_agent_grid_finds_half() {
    let problem = Problem::quadratic_binary(Network::empty(1), None, half_linear());
    let best = brute_force_optimal_contract(&problem, 0.01, &success_bounds(1, 1.0)).unwrap();
    assert_relative_eq!(best.contract.payments[(0, 1)], 0.5, epsilon = 1e-12);
    assert_relative_eq!(best.payoff, 0.0625, epsilon = 1e-12);
    assert_eq!(best.evaluated, 101);
}

#[test]
fn zero_revenue_grid_pays_nothing() {
    let outcomes =
        OutcomeModel::MultiOutcome { theta: vec![-2.0, 0.5, 1.0], bias: vec![1.5, 0.0, 0.0], revenues: vec![0.0; 3] };
    let problem = network_problem(Network::empty(1), outcomes, Utility::Linear);
    let best = brute_force_optimal_contract(&problem, 0.1, &[(0.0, 0.5); 3]).unwrap();
    assert!(best.contract.payments.iter().all(|&t| t == 0.0));
    assert_eq!(best.payoff, 0.0);
}

#[test]
fn two_clique_grid_is_within_one_cell_of_the_optimum() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    let best = brute_force_refined(&problem, &[0.05, 0.01, 0.002], &success_bounds(2, 0.6)).unwrap();
    let s = total_share_root(1.0, 0.5, 2.0).unwrap();
    for i in 0..2 {
        assert!((best.contract.payments[(i, 1)] - 0.5 * s).abs() <= 0.002 + 1e-12);
    }
    let exact = optimize_quadratic_binary(&two_clique(), &half_linear(), &OptimizerOptions::default()).unwrap();
    assert!(best.payoff <= exact.principal_payoff + 1e-12);
    assert!(exact.principal_payoff - best.payoff < 1e-5);
}

#[test]
fn grid_dimension_is_capped() {
    let problem = Problem::quadratic_binary(Network::empty(4), None, half_linear());
    let err = brute_force_optimal_contract(&problem, 0.1, &[(0.0, 1.0); 8]).unwrap_err();
    assert_eq!(err, OracleError::Dimension { dims: 8, max: MAX_GRID_DIMENSION });
    assert!(matches!(brute_force_optimal_contract(&problem, 0.1, &[(0.0, 1.0); 3]), Err(OracleError::Input(_))));
    assert!(matches!(brute_force_refined(&problem, &[], &success_bounds(4, 1.0)), Err(OracleError::Input(_))));
}

#[test]
fn zero_contract_settles_in_one_sweep() {
    let problem = Problem::quadratic_binary(weighted_triangle(0.5), None, half_linear());
    let eq = best_response_iterate(&problem, &Contract::zeros(3, 2), 1e-12, 1.0).unwrap();
    assert_eq!(eq.actions, vec![0.0; 3]);
    assert_eq!(eq.iterations, 1);
}

#[test]
fn best_responses_agree_with_the_linear_solve() {
    let mut rng = rng(41);
    let p = SuccessProbability::LinearCapped { slope: 0.4 };
    for _ in 0..10 {
        let network = random_network(&mut rng, 3, 0.8);
        let tau = [0.2, 0.3, 0.1];
        let exact = solve_equilibrium_quadratic_binary(&network, &[1.0; 3], &tau, &p).unwrap();
        let problem = Problem::quadratic_binary(network, None, p.clone());
        let oracle = best_response_iterate(&problem, &Contract::success_only(&tau), 1e-13, 1.0).unwrap();
        assert!(max_abs_diff(&oracle.actions, exact.actions.as_slice()) < 1e-8);
        assert_relative_eq!(oracle.performance, exact.performance, epsilon = 1e-8);
    }
}

#[test]
fn symmetric_equilibrium_is_reached_from_an_asymmetric_start() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    let eq = best_response_iterate_from(&problem, &Contract::success_only(&[0.25, 0.25]), &[2.0, 0.0], 1e-13, 1.0, 10_000)
        .unwrap();
    assert_relative_eq!(eq.actions[0], 1.0 / 7.0, epsilon = 1e-10);
    assert_relative_eq!(eq.actions[1], 1.0 / 7.0, epsilon = 1e-10);
}

#[test]
fn iteration_limit_is_reported() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    let err = best_response_iterate_from(&problem, &Contract::success_only(&[0.25, 0.25]), &[2.0, 0.0], 1e-15, 1.0, 2)
        .unwrap_err();
    assert!(matches!(err, OracleError::NoConvergence { iterations: 2, .. }));
}

#[test]
fn action_grid_bound() {
    assert_eq!(action_bound(&Contract::zeros(2, 2)), 10.0);
    assert_eq!(action_bound(&Contract::from_rows(&[vec![0.5, 0.25], vec![0.0, 0.5]])), 20.0);
}

#[test]
fn finite_differences_of_a_square() {
    let square = |x: f64| Ok::<f64, String>(x * x);
    assert!((finite_diff(square, 3.0, 1e-4).unwrap() - 6.0).abs() < 1e-9);
    assert!((finite_diff_richardson(square, 3.0, 1e-2).unwrap() - 6.0).abs() < 1e-9);
    let cube = |x: f64| Ok::<f64, String>(x * x * x);
    assert!((finite_diff_richardson(cube, 2.0, 1e-2).unwrap() - 12.0).abs() < 1e-9);
    let failing = |x: f64| if x > 1.0 { Err("out of range".to_string()) } else { Ok(x) };
    assert!(matches!(finite_diff(failing, 1.0, 0.1), Err(OracleError::Evaluation { .. })));
}

#[test]
fn single_agent_performance_slope() {
    let problem = Problem::quadratic_binary(Network::empty(1), None, half_linear());
    let d = finite_diff_richardson(
        |h| best_response_iterate(&problem, &Contract::success_only(&[0.4 + h]), 1e-14, 1.0).map(|e| e.performance),
        0.0,
        1e-3,
    )
    .unwrap();
    assert!((d - 0.5).abs() < 1e-8);
}

#[test]
fn principal_payoff_is_flat_at_the_optimal_share() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    let s = total_share_root(1.0, 0.5, 2.0).unwrap();
    let payoff = |x: f64| {
        let contract = Contract::success_only(&[0.5 * x, 0.5 * x]);
        best_response_iterate(&problem, &contract, 1e-12, 1.0)
            .map(|e| problem.principal_payoff(&contract, e.performance))
    };
    assert!(finite_diff_richardson(payoff, s, 1e-3).unwrap().abs() < 1e-7);
    assert!(finite_diff_richardson(payoff, s - 0.05, 1e-3).unwrap() > 1e-3);
}

#[test]
fn oracle_depends_on_the_model_only() {
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/oracle.rs")).unwrap();
    let imports: Vec<&str> = source.lines().filter(|l| l.contains("crate::")).collect();
    assert!(!imports.is_empty());
    for line in imports {
        let rest = &line[line.find("crate::").unwrap() + "crate::".len()..];
        assert!(rest.starts_with("model"), "oracle imports outside the model: {line}");
    }
    assert!(!source.contains("super::"));
}
