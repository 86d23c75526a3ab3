mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use rand::Rng;

use common::*;
use netcontract::model::{
    outcome_probs, production_eval, utility_eval, validate_problem, Contract, CostFunction, EquityContract, ModelError,
    Network, OutcomeModel, Problem, ProductionFunction, SuccessProbability, Utility,
};

#[test]
fn well_formed_quadratic_problem_validates() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    assert!(validate_problem(&problem).is_ok());
}

#[test]
fn asymmetric_network_is_flagged() {
    let net = Network::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]);
    let report = validate_problem(&Problem::quadratic_binary(net, None, half_linear()));
    assert!(report.violations.iter().any(|v| v.message.contains("symmetry")));
}

#[test]
fn ces_with_zero_rho_points_to_cobb_douglas() {
    let problem = Problem::risk_neutral(
        ProductionFunction::Ces { gamma: vec![1.0, 1.0], rho: 0.0, kappa: 1.0 },
        OutcomeModel::binary(half_linear()),
    );
    let report = validate_problem(&problem);
    assert!(report.violations.iter().any(|v| v.message.to_lowercase().contains("cobb")));
}

#[test]
fn negative_diagonal_and_dimension_violations_are_all_reported() {
    let net = Network::from_rows(&[vec![1.0, -1.0], vec![-1.0, 0.0]]);
    let mut problem = Problem::quadratic_binary(net, None, half_linear());
    problem.costs.pop();
    let report = validate_problem(&problem);
    assert!(report.violations.len() >= 3, "{:?}", report.violations);
}

#[test]
fn quadratic_production_at_the_hand_checked_profile() {
    let prod = ProductionFunction::quadratic(two_clique());
    let a = [1.0 / 7.0, 1.0 / 7.0];
    let e = production_eval(&prod, &a).unwrap();
    assert_relative_eq!(e.value, 15.0 / 49.0, epsilon = 1e-15);
    assert_relative_eq!(e.grad[0], 8.0 / 7.0, epsilon = 1e-15);
    assert_relative_eq!(e.grad[1], 8.0 / 7.0, epsilon = 1e-15);
    assert_eq!(e.hessian, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
}

#[test]
fn quadratic_production_at_zero_returns_standalone_coefficients() {
    let prod = ProductionFunction::QuadraticNetwork { network: weighted_triangle(0.3), standalone: Some(vec![1.2, 1.0, 0.7]) };
    let e = production_eval(&prod, &[0.0; 3]).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.grad.as_slice(), &[1.2, 1.0, 0.7]);
}

fn fd_gradient(prod: &ProductionFunction, a: &[f64], h: f64) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            let (mut up, mut down) = (a.to_vec(), a.to_vec());
            up[i] += h;
            down[i] -= h;
            (prod.value(&up) - prod.value(&down)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn cobb_douglas_derivatives_match_finite_differences() {
    let prod = ProductionFunction::CobbDouglas { gamma: vec![1.0, 2.0] };
    let e = production_eval(&prod, &[1.0, 1.0]).unwrap();
    assert_relative_eq!(e.value, 1.0);
    assert_relative_eq!(e.grad[0], 1.0, epsilon = 1e-14);
    assert_relative_eq!(e.grad[1], 2.0, epsilon = 1e-14);
    assert_relative_eq!(e.hessian[(0, 0)], 0.0, epsilon = 1e-14);
    assert_relative_eq!(e.hessian[(1, 1)], 2.0, epsilon = 1e-14);
    assert_relative_eq!(e.hessian[(0, 1)], 2.0, epsilon = 1e-14);
    let fd = fd_gradient(&prod, &[1.0, 1.0], 1e-5);
    assert_relative_eq!(fd[1], 2.0, epsilon = 1e-8);
}

#[test]
fn cobb_douglas_gradient_rejects_zero_actions() {
    let prod = ProductionFunction::CobbDouglas { gamma: vec![0.5, 0.5] };
    assert!(matches!(production_eval(&prod, &[0.0, 1.0]), Err(ModelError::Domain(_))));
}

#[test]
fn hessians_match_finite_differences_of_the_gradient() {
    let mut rng = rng(11);
    let families = [
        ProductionFunction::quadratic(weighted_triangle(0.4)),
        ProductionFunction::CobbDouglas { gamma: vec![0.3, 0.5, 0.9] },
        ProductionFunction::Ces { gamma: vec![1.0, 2.0, 0.5], rho: 0.5, kappa: 0.8 },
        ProductionFunction::Ces { gamma: vec![1.0, 2.0, 0.5], rho: -2.0, kappa: 1.2 },
    ];
    for prod in &families {
        for _ in 0..20 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..2.0)).collect();
            let e = production_eval(prod, &a).unwrap();
            let h = 1e-6;
            for j in 0..3 {
                let (mut up, mut down) = (a.clone(), a.clone());
                up[j] += h;
                down[j] -= h;
                let (gu, gd) = (prod.gradient(&up), prod.gradient(&down));
                for i in 0..3 {
                    let fd = (gu[i] - gd[i]) / (2.0 * h);
                    let scale = e.hessian[(i, j)].abs().max(1e-2);
                    assert!((fd - e.hessian[(i, j)]).abs() / scale < 1e-6, "{prod:?} at {a:?}: ({i},{j})");
                }
            }
            assert_relative_eq!(e.hessian, e.hessian.transpose(), epsilon = 1e-12);
        }
    }
}

#[test]
fn production_is_strictly_increasing() {
    let mut rng = rng(12);
    let families = [
        ProductionFunction::quadratic(random_network(&mut rng, 3, 1.0)),
        ProductionFunction::CobbDouglas { gamma: vec![0.3, 0.5, 0.9] },
        ProductionFunction::Ces { gamma: vec![1.0, 2.0, 0.5], rho: 0.5, kappa: 0.8 },
    ];
    for prod in &families {
        for _ in 0..50 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..3.0)).collect();
            for i in 0..3 {
                let mut b = a.clone();
                b[i] += 1e-6;
                assert!(prod.value(&b) > prod.value(&a));
            }
        }
    }
}

#[test]
fn linear_capped_probabilities_below_the_kink() {
    let probs = outcome_probs(&OutcomeModel::binary(half_linear()), 0.4).unwrap();
    assert_relative_eq!(probs.p[1], 0.2, epsilon = 1e-15);
    assert_relative_eq!(probs.p[0], 0.8, epsilon = 1e-15);
    assert_eq!(probs.dp, vec![-0.5, 0.5]);
    assert_eq!(probs.d2p, vec![0.0, 0.0]);
}

#[test]
fn linear_capped_rejects_the_cap() {
    let err = outcome_probs(&OutcomeModel::binary(half_linear()), 2.0).unwrap_err();
    assert!(matches!(err, ModelError::CapExceeded { .. }));
}

#[test]
fn flat_softmax_has_zero_derivatives() {
    let model = OutcomeModel::MultiOutcome { theta: vec![0.0; 3], bias: vec![0.3, -1.0, 2.0], revenues: vec![0.0, 1.0, 2.0] };
    let probs = outcome_probs(&model, 1.7).unwrap();
    assert!(probs.dp.iter().all(|&d| d == 0.0));
}

#[test]
fn softmax_derivatives_match_finite_differences() {
    let model = OutcomeModel::MultiOutcome { theta: vec![0.0, 1.0, 2.0], bias: vec![0.0; 3], revenues: vec![0.0, 1.0, 2.0] };
    let h = 1e-5;
    let (at, up, down) =
        (outcome_probs(&model, 1.0).unwrap(), outcome_probs(&model, 1.0 + h).unwrap(), outcome_probs(&model, 1.0 - h).unwrap());
    for s in 0..3 {
        assert_relative_eq!(at.dp[s], (up.p[s] - down.p[s]) / (2.0 * h), epsilon = 1e-9);
        assert_relative_eq!(at.d2p[s], (up.dp[s] - down.dp[s]) / (2.0 * h), epsilon = 1e-9);
    }
}

#[test]
fn probabilities_sum_to_one_and_derivatives_to_zero() {
    let mut rng = rng(13);
    let models = [
        OutcomeModel::binary(half_linear()),
        OutcomeModel::binary(SuccessProbability::Logistic { scale: 0.7, shift: -0.2 }),
        OutcomeModel::binary(SuccessProbability::Power { r: 1.5 }),
        three_outcomes(),
    ];
    for model in &models {
        for _ in 0..100 {
            let y = rng.random_range(0.0..1.9);
            let probs = outcome_probs(model, y).unwrap();
            assert!((probs.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(probs.dp.iter().sum::<f64>().abs() < 1e-12);
            assert!(probs.p.iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn utility_examples() {
    assert_eq!(utility_eval(&Utility::Linear, 0.4).unwrap(), (0.4, 1.0));
    assert_eq!(utility_eval(&Utility::Sqrt, 0.25).unwrap(), (0.5, 1.0));
    let (v, m) = utility_eval(&Utility::Sqrt, 0.0).unwrap();
    assert_eq!(v, 0.0);
    assert_eq!(m, f64::INFINITY);
    assert!(utility_eval(&Utility::Log1p, -0.1).is_err());
    let (v, m) = utility_eval(&Utility::Power { eta: 0.5 }, 4.0).unwrap();
    assert_relative_eq!(v, 2.0);
    assert_relative_eq!(m, 0.25);
}

#[test]
fn cost_function_derivatives() {
    let c = CostFunction { scale: 2.0, exponent: 3.0 };
    assert_relative_eq!(c.value(1.5), 2.0 * 1.5f64.powi(3) / 3.0);
    assert_relative_eq!(c.marginal(1.5), 2.0 * 1.5 * 1.5);
    assert_relative_eq!(c.curvature(1.5), 2.0 * 2.0 * 1.5);
    assert_eq!(c.marginal(0.0), 0.0);
}

#[test]
fn problem_json_round_trips_and_rejects_unknown_fields() {
    let problem = Problem::quadratic_binary(weighted_triangle(0.3), Some(vec![1.2, 1.0, 1.0]), half_linear());
    let text = serde_json::to_string(&problem).unwrap();
    assert_eq!(Problem::from_json(&text).unwrap(), problem);
    let bad = text.replacen("\"n\":3", "\"n\":3,\"extra\":1", 1);
    assert!(Problem::from_json(&bad).is_err());
}

#[test]
fn contracts_reject_negative_payments_and_equity_overshoot() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    assert!(Contract::success_only(&[0.1, -0.1]).check(&problem).is_err());
    assert!(Contract::success_only(&[0.1, 0.1, 0.1]).check(&problem).is_err());
    assert!(EquityContract { shares: vec![0.6, 0.5] }.check().is_err());
    let sigma = EquityContract { shares: vec![0.2, 0.1] };
    let c = sigma.to_contract(&[0.0, 1.0, 2.0]);
    assert_eq!(c.payments.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.2, 0.4]);
}

#[test]
fn principal_and_agent_payoffs() {
    let problem = Problem::quadratic_binary(two_clique(), None, half_linear());
    let contract = Contract::success_only(&[0.25, 0.25]);
    let y = 15.0 / 49.0;
    assert_relative_eq!(problem.principal_payoff(&contract, y), 0.5 * 0.5 * y, epsilon = 1e-15);
    let a = [1.0 / 7.0, 1.0 / 7.0];
    assert_relative_eq!(problem.agent_payoff(&contract, 0, &a), 0.25 * 0.5 * y - a[0] * a[0] / 2.0, epsilon = 1e-15);
}
