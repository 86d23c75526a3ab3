mod common;

use approx::assert_relative_eq;
use rand::Rng;

use common::*;
use netcontract::contract_opt::{
    closed_form_ces, closed_form_cobb_douglas, optimal_active_set, optimal_active_set_with_cap, optimize_general,
    optimize_quadratic_binary, share_polynomial, total_share_root, Method, OptimizerOptions,
};
use netcontract::model::{Network, OutcomeModel, ProductionFunction, Problem, SuccessProbability, Utility};
use netcontract::Error;

fn triangle_pendant() -> Network {
    Network::from_edges(4, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
}

fn logistic() -> SuccessProbability {
    SuccessProbability::Logistic { scale: 1.0, shift: 0.0 }
}

/// Principal payoff of the symmetric 2-clique contract paying `tau` to each agent.
fn two_clique_payoff(tau: f64) -> f64 {
    let a = 0.5 * tau / (1.0 - 0.5 * tau);
    (1.0 - 2.0 * tau) * 0.5 * (2.0 * a + a * a)
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (x1, x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(x1) < f(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn single_agent_pays_half_the_revenue() {
    let opt = optimize_quadratic_binary(&Network::empty(1), &half_linear(), &OptimizerOptions::default()).unwrap();
    assert_relative_eq!(opt.contract.payments[(0, 1)], 0.5, epsilon = 1e-8);
    assert_relative_eq!(opt.principal_payoff, 0.0625, epsilon = 1e-12);
    assert_eq!(opt.method, Method::Quadratic);

    let problem = Problem::quadratic_binary(Network::empty(1), None, half_linear());
    let general = optimize_general(&problem, &OptimizerOptions::default()).unwrap();
    assert_relative_eq!(general.contract.payments[(0, 1)], 0.5, epsilon = 1e-6);
    assert_relative_eq!(general.contract.payments[(0, 0)], 0.0, epsilon = 1e-9);
    assert!(general.kkt_residual < 1e-6);
}

#[test]
fn two_clique_optimum_matches_a_direct_search() {
    let tau = golden_max(two_clique_payoff, 0.0, 0.5);
    let opt = optimize_quadratic_binary(&two_clique(), &half_linear(), &OptimizerOptions::default()).unwrap();
    assert_relative_eq!(opt.contract.payments[(0, 1)], tau, epsilon = 1e-7);
    assert_relative_eq!(opt.contract.payments[(1, 1)], tau, epsilon = 1e-7);
    assert_relative_eq!(opt.principal_payoff, two_clique_payoff(tau), epsilon = 1e-12);
    assert_relative_eq!(tau, 0.2776, epsilon = 1e-4);
    assert_relative_eq!(opt.balance_constant.unwrap(), tau, epsilon = 1e-7);
    assert_eq!(opt.active_set, vec![0, 1]);

    let general =
        optimize_general(&Problem::quadratic_binary(two_clique(), None, half_linear()), &OptimizerOptions::default())
            .unwrap();
    assert!((general.principal_payoff - opt.principal_payoff).abs() < 1e-9);
}

#[test]
fn clique_total_share_is_the_polynomial_root() {
    let opt = optimize_quadratic_binary(&two_clique(), &half_linear(), &OptimizerOptions::default()).unwrap();
    let total: f64 = success_payments(&opt.contract).iter().sum();
    let root = total_share_root(1.0, 0.5, 2.0).unwrap();
    assert_relative_eq!(total, root, epsilon = 1e-7);
    assert!(share_polynomial(1.0, 0.5, 2.0, root).abs() < 1e-12);
}

#[test]
fn total_share_root_limits_and_monotonicity() {
    assert_eq!(total_share_root(0.0, 0.5, 2.0).unwrap(), 0.5);
    assert_relative_eq!(total_share_root(1e-9, 0.5, 2.0).unwrap(), 0.5, epsilon = 1e-8);
    let mut last = 0.5;
    for k in 1..20 {
        let s = total_share_root(0.1 * k as f64, 0.5, 2.0).unwrap();
        assert!(s > last && s < 1.0);
        last = s;
    }
    assert!(matches!(total_share_root(4.0, 0.5, 2.0), Err(Error::Precondition(_))));
    assert!(matches!(total_share_root(-1.0, 0.5, 2.0), Err(Error::Precondition(_))));
}

#[test]
fn zero_revenue_pays_nothing() {
    let outcomes =
        OutcomeModel::MultiOutcome { theta: vec![-2.0, 0.5, 1.0], bias: vec![1.5, 0.0, 0.0], revenues: vec![0.0; 3] };
    let problem = network_problem(two_clique(), outcomes, Utility::Linear);
    let opt = optimize_general(&problem, &OptimizerOptions::default()).unwrap();
    assert!(opt.contract.payments.iter().all(|&t| t == 0.0));
    assert_eq!(opt.principal_payoff, 0.0);
    assert!(opt.active_set.is_empty());
}

#[test]
fn triangle_with_pendant_pays_the_triangle_equally() {
    let opt = optimize_quadratic_binary(&triangle_pendant(), &half_linear(), &OptimizerOptions::default()).unwrap();
    assert_eq!(opt.active_set, vec![0, 1, 2]);
    let tau = success_payments(&opt.contract);
    assert_eq!(tau[3], 0.0);
    assert!(max_abs_diff(&tau[..3], &[tau[0]; 3]) < 1e-12);
    let triangle_payoff = |t: f64| {
        let a = 0.5 * t / (1.0 - t);
        (1.0 - 3.0 * t) * 0.5 * (3.0 * a + 3.0 * a * a)
    };
    assert_relative_eq!(tau[0], golden_max(triangle_payoff, 0.0, 1.0 / 3.0), epsilon = 1e-7);
    let problem = Problem::quadratic_binary(triangle_pendant(), None, half_linear());
    let general = optimize_general(&problem, &OptimizerOptions::default()).unwrap();
    assert!(general.principal_payoff <= opt.principal_payoff + 1e-9);
    assert!(opt.principal_payoff - general.principal_payoff < 1e-7);
}

#[test]
fn balance_constants_hold_on_the_active_set() {
    let network = weighted_triangle(0.3);
    let opt = optimize_quadratic_binary(&network, &half_linear(), &OptimizerOptions::default()).unwrap();
    let g = network.effective();
    let tau = nalgebra::DVector::from_vec(success_payments(&opt.contract));
    let a = &opt.equilibrium.actions;
    let (gt, ga) = (&g * &tau, &g * a);
    for &i in &opt.active_set {
        assert_relative_eq!(gt[i], opt.balance_constant.unwrap(), epsilon = 1e-10);
        assert_relative_eq!(ga[i], opt.neighborhood_action_constant.unwrap(), epsilon = 1e-10);
    }
    assert!(opt.max_balance_residual.unwrap() < 1e-8);
}

#[test]
fn active_set_of_triangle_with_pendant() {
    let candidates = optimal_active_set(&triangle_pendant(), &half_linear()).unwrap();
    assert_eq!(candidates.len(), 1);
    assert_eq!(candidates[0].members, vec![0, 1, 2]);
    assert_relative_eq!(candidates[0].lambda_per_share, 2.0 / 3.0, epsilon = 1e-15);
    assert_eq!(candidates[0].shares, vec![1.0 / 3.0; 3]);
}

#[test]
fn active_set_prefers_the_heavier_edge() {
    let network = Network::from_edges(4, &[(0, 1, 1.0), (2, 3, 0.5)]);
    let candidates = optimal_active_set(&network, &half_linear()).unwrap();
    assert_eq!(candidates[0].members, vec![0, 1]);
    assert_relative_eq!(candidates[0].lambda_per_share, 0.5, epsilon = 1e-12);
    let other = candidates.iter().find(|c| c.members == vec![2, 3]).unwrap();
    assert_relative_eq!(other.lambda_per_share, 0.25, epsilon = 1e-12);
}

#[test]
fn active_set_ties_go_to_the_first_clique() {
    let path = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
    let candidates = optimal_active_set(&path, &half_linear()).unwrap();
    assert_eq!(candidates.len(), 2);
    assert_eq!(candidates[0].members, vec![0, 1]);
    assert_eq!(candidates[1].members, vec![1, 2]);
    let opt = optimize_quadratic_binary(&path, &half_linear(), &OptimizerOptions::default()).unwrap();
    assert_eq!(opt.active_set, vec![0, 1]);
}

#[test]
fn weighted_active_set_ranks_by_balance_constant() {
    let candidates = optimal_active_set(&weighted_triangle(0.3), &half_linear()).unwrap();
    assert!(candidates.windows(2).all(|w| w[0].lambda_per_share >= w[1].lambda_per_share - 1e-15));
    for c in &candidates {
        assert_relative_eq!(c.shares.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(c.shares.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn enumeration_cap_is_enforced() {
    let network = Network::empty(17);
    let err = optimal_active_set(&network, &half_linear()).unwrap_err();
    assert!(matches!(err, Error::EnumerationCap { n: 17, cap: 16 }));
    assert!(optimal_active_set_with_cap(&Network::empty(5), &half_linear(), 4).is_err());
    let opts = OptimizerOptions { enumeration_cap: 3, ..OptimizerOptions::default() };
    assert!(matches!(optimize_quadratic_binary(&triangle_pendant(), &half_linear(), &opts), Err(Error::EnumerationCap { .. })));
}

#[test]
fn convex_success_probability_is_rejected() {
    let p = SuccessProbability::Logistic { scale: 1.0, shift: 2.0 };
    let err = optimize_quadratic_binary(&two_clique(), &p, &OptimizerOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn cobb_douglas_symmetric_weights_pay_equally() {
    let opt = closed_form_cobb_douglas(&[1.0, 1.0], &logistic()).unwrap();
    let tau = success_payments(&opt.contract);
    assert_relative_eq!(tau[0], tau[1], epsilon = 1e-12);
    assert!(tau[0] > 0.0);
    assert_eq!(opt.method, Method::CobbDouglas);
}

#[test]
fn cobb_douglas_closed_form_matches_the_general_optimizer() {
    let opt = closed_form_cobb_douglas(&[1.0, 2.0], &logistic()).unwrap();
    let tau = success_payments(&opt.contract);
    assert_relative_eq!(tau[1] / tau[0], 2.0, epsilon = 1e-12);
    let problem =
        Problem::risk_neutral(ProductionFunction::CobbDouglas { gamma: vec![1.0, 2.0] }, OutcomeModel::binary(logistic()));
    let general = optimize_general(&problem, &OptimizerOptions::default()).unwrap();
    assert!((general.principal_payoff - opt.principal_payoff).abs() < 1e-5);
}

#[test]
fn cobb_douglas_linear_guard() {
    assert!(matches!(closed_form_cobb_douglas(&[1.0, 1.0], &half_linear()), Err(Error::Precondition(_))));
    assert!(closed_form_cobb_douglas(&[0.5, 0.5], &half_linear()).is_ok());
}

#[test]
fn ces_payments_follow_the_weight_power() {
    let opt = closed_form_ces(&[1.0, 1.0], 0.5, 1.0, &half_linear()).unwrap();
    let tau = success_payments(&opt.contract);
    assert_relative_eq!(tau[0], tau[1], epsilon = 1e-12);

    let opt = closed_form_ces(&[4.0, 1.0], -20.0, 1.0, &half_linear()).unwrap();
    let tau = success_payments(&opt.contract);
    assert_relative_eq!(tau[0] / tau[1], 4f64.powf(1.0 / 21.0), epsilon = 1e-12);
    assert_eq!(opt.method, Method::Ces);
    assert!(matches!(closed_form_ces(&[1.0, 1.0], 1.0, 1.0, &half_linear()), Err(Error::Precondition(_))));
}

#[test]
fn ces_closed_form_matches_the_general_optimizer() {
    let opt = closed_form_ces(&[0.4, 0.2], 0.5, 1.0, &half_linear()).unwrap();
    let problem = Problem::risk_neutral(
        ProductionFunction::Ces { gamma: vec![0.4, 0.2], rho: 0.5, kappa: 1.0 },
        OutcomeModel::binary(half_linear()),
    );
    let general = optimize_general(&problem, &OptimizerOptions::default());
    let general = general.unwrap_or_else(|e| panic!("{e:?}"));
    assert!((general.principal_payoff - opt.principal_payoff).abs() < 1e-6);
}

#[test]
fn principal_payoff_weakly_increases_with_links() {
    let mut rng = rng(31);
    let opts = OptimizerOptions::default();
    for _ in 0..10 {
        let network = random_network(&mut rng, 4, 0.8);
        let base = optimize_quadratic_binary(&network, &half_linear(), &opts).unwrap();
        let (i, j) = (rng.random_range(0..4), rng.random_range(0..4));
        if i == j {
            continue;
        }
        let bumped = network.with_link(i, j, network.link(i, j) + 0.1);
        let after = optimize_quadratic_binary(&bumped, &half_linear(), &opts).unwrap();
        assert!(after.principal_payoff >= base.principal_payoff - 1e-9);
    }
}

#[test]
fn inada_utilities_keep_every_agent_active() {
    let problem = network_problem(weighted_triangle(0.5), OutcomeModel::binary(half_linear()), Utility::Sqrt);
    let opt = optimize_general(&problem, &OptimizerOptions::default()).unwrap();
    assert_eq!(opt.active_set, vec![0, 1, 2]);
    assert!(opt.equilibrium.actions.iter().all(|&a| a > 0.0));
    assert!(opt.kkt_residual < 1e-6);
}

#[test]
fn general_optimizer_is_deterministic() {
    let problem = network_problem(weighted_triangle(0.5).with_beta(0.5), three_outcomes(), Utility::Sqrt);
    let a = optimize_general(&problem, &OptimizerOptions::default()).unwrap();
    let b = optimize_general(&problem, &OptimizerOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn result_round_trips_through_json() {
    let opt = optimize_quadratic_binary(&weighted_triangle(0.3), &half_linear(), &OptimizerOptions::default()).unwrap();
    let text = serde_json::to_string(&opt).unwrap();
    assert_eq!(serde_json::from_str::<netcontract::contract_opt::OptimalContractResult>(&text).unwrap(), opt);
}
