//! Shared instance builders for the integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netcontract::model::{
    Contract, CostFunction, Network, OutcomeModel, Problem, ProductionFunction, SuccessProbability, Utility,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric network with independent uniform weights in `[0, max_weight]`.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize, max_weight: f64) -> Network {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let x = rng.random_range(0.0..max_weight);
            w[(i, j)] = x;
            w[(j, i)] = x;
        }
    }
    Network::new(w)
}

/// Unweighted graph where each edge is present with probability `density`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Network {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(density) {
                edges.push((i, j, 1.0));
            }
        }
    }
    Network::from_edges(n, &edges)
}

pub fn two_clique() -> Network {
    Network::from_edges(2, &[(0, 1, 1.0)])
}

/// Triangle with `G12 = 1`, `G13 = 0.8` and the given `G23`.
pub fn weighted_triangle(g23: f64) -> Network {
    Network::from_edges(3, &[(0, 1, 1.0), (0, 2, 0.8), (1, 2, g23)])
}

pub fn half_linear() -> SuccessProbability {
    SuccessProbability::LinearCapped { slope: 0.5 }
}

/// Three outcomes with softmax probabilities `exp(theta_s Y + b_s) / sum_t exp(theta_t Y + b_t)`,
/// most likely the zero-revenue outcome at zero effort.
pub fn three_outcomes() -> OutcomeModel {
    OutcomeModel::MultiOutcome { theta: vec![-2.0, 0.5, 1.0], bias: vec![1.5, 0.0, 0.0], revenues: vec![0.0, 1.0, 2.0] }
}

/// Quadratic network problem with the given outcome model and one utility for all agents.
pub fn network_problem(network: Network, outcomes: OutcomeModel, utility: Utility) -> Problem {
    let n = network.n();
    let mut problem = Problem::risk_neutral(ProductionFunction::quadratic(network), outcomes);
    problem.utilities = vec![utility; n];
    problem
}

/// Random problem for derivative checks: a quadratic network with `n <= 4`,
/// binary or three-outcome, linear or square-root utilities, and random costs,
/// together with a strictly positive contract.
pub fn random_smooth_instance(rng: &mut ChaCha8Rng) -> (Problem, Contract) {
    let n = rng.random_range(1..=4);
    let network = random_network(rng, n, 0.6);
    let three = rng.random_bool(0.5);
    let outcomes = if three {
        let theta = vec![rng.random_range(-1.0..0.0), rng.random_range(0.0..0.8), rng.random_range(0.8..1.5)];
        let bias = vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0];
        OutcomeModel::MultiOutcome { theta, bias, revenues: vec![0.0, 1.0, 2.0] }
    } else {
        let success = match rng.random_range(0..3) {
            0 => SuccessProbability::LinearCapped { slope: rng.random_range(0.2..0.6) },
            1 => SuccessProbability::Logistic { scale: rng.random_range(0.5..2.0), shift: rng.random_range(-1.0..0.0) },
            _ => SuccessProbability::Power { r: rng.random_range(0.5..2.0) },
        };
        OutcomeModel::binary(success)
    };
    let utility = if rng.random_bool(0.5) { Utility::Linear } else { Utility::Sqrt };
    let mut problem = network_problem(network, outcomes, utility);
    problem.costs = (0..n)
        .map(|_| CostFunction { scale: rng.random_range(0.5..2.0), exponent: if rng.random_bool(0.5) { 2.0 } else { 2.5 } })
        .collect();
    let m = problem.num_outcomes();
    let contract = Contract::new(DMatrix::from_fn(n, m, |_, _| rng.random_range(0.05..0.4)));
    (problem, contract)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Success payments of a binary-outcome contract.
pub fn success_payments(contract: &Contract) -> Vec<f64> {
    contract.outcome_column(1)
}
