//! Environment, contracts and their validation.

mod error;
mod network;
mod outcome;
mod production;
pub mod serde_matrix;
mod utility;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use error::ModelError;
pub use network::Network;
pub use outcome::{outcome_probs, OutcomeModel, OutcomeProbs, SuccessProbability};
pub use production::{production_eval, Monomial, ProductionEval, ProductionFunction};
pub use utility::{utility_eval, CostFunction, Utility};

/// Full contracting environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub n: usize,
    pub production: ProductionFunction,
    pub outcomes: OutcomeModel,
    pub utilities: Vec<Utility>,
    pub costs: Vec<CostFunction>,
}

/// Pieces of a problem with quadratic network production, a success-or-failure
/// outcome, risk-neutral agents and unit quadratic costs.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBinary {
    pub network: Network,
    pub standalone: Vec<f64>,
    pub success: SuccessProbability,
}

impl Problem {
    /// Problem with risk-neutral agents and unit quadratic costs.
    pub fn risk_neutral(production: ProductionFunction, outcomes: OutcomeModel) -> Self {
        let n = production.n();
        Self {
            n,
            production,
            outcomes,
            utilities: vec![Utility::Linear; n],
            costs: vec![CostFunction::quadratic(); n],
        }
    }

    /// Quadratic network with a success-or-failure outcome.
    pub fn quadratic_binary(network: Network, standalone: Option<Vec<f64>>, success: SuccessProbability) -> Self {
        Self::risk_neutral(
            ProductionFunction::QuadraticNetwork { network, standalone },
            OutcomeModel::binary(success),
        )
    }

    /// Parse from JSON, rejecting unknown fields.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.num_outcomes()
    }

    /// The quadratic-binary view of this problem, if it has that structure.
    pub fn as_quadratic_binary(&self) -> Option<QuadraticBinary> {
        let ProductionFunction::QuadraticNetwork { network, .. } = &self.production else {
            return None;
        };
        let success = self.outcomes.success()?;
        let risk_neutral = self.utilities.iter().all(|u| *u == Utility::Linear);
        let unit_cost = self.costs.iter().all(CostFunction::is_unit_quadratic);
        (risk_neutral && unit_cost).then(|| QuadraticBinary {
            network: network.clone(),
            standalone: self.production.standalone().unwrap_or_default(),
            success: success.clone(),
        })
    }

    /// List every violated invariant.
    pub fn validate(&self) -> ValidationReport {
        validate_problem(self)
    }

    /// Expected utility of agent `i` at the action profile `a` (total on `a >= 0`).
    pub fn agent_payoff(&self, contract: &Contract, i: usize, a: &[f64]) -> f64 {
        let y = self.production.value(a);
        let probs = self.outcomes.prob_values(y);
        let benefit: f64 = probs
            .iter()
            .enumerate()
            .map(|(s, p)| p * self.utilities[i].value(contract.payments[(i, s)]))
            .sum();
        benefit - self.costs[i].value(a[i])
    }

    /// Principal's expected revenue net of transfers when performance is `y`.
    pub fn principal_payoff(&self, contract: &Contract, y: f64) -> f64 {
        let revenues = self.outcomes.revenues();
        self.outcomes
            .prob_values(y)
            .iter()
            .enumerate()
            .map(|(s, p)| (revenues[s] - contract.payments.column(s).sum()) * p)
            .sum()
    }
}

/// Per-agent, per-outcome nonnegative payments (rows agents, columns outcomes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contract {
    #[serde(with = "serde_matrix::rows")]
    pub payments: DMatrix<f64>,
}

impl Contract {
    pub fn new(payments: DMatrix<f64>) -> Self {
        Self { payments }
    }

    pub fn zeros(n: usize, outcomes: usize) -> Self {
        Self::new(DMatrix::zeros(n, outcomes))
    }

    /// Success-or-failure contract paying `tau[i]` on success and nothing on failure.
    pub fn success_only(tau: &[f64]) -> Self {
        Self::new(DMatrix::from_fn(tau.len(), 2, |i, s| if s == 1 { tau[i] } else { 0.0 }))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        Self::new(DMatrix::from_fn(n, m, |i, s| rows[i][s]))
    }

    pub fn n(&self) -> usize {
        self.payments.nrows()
    }

    pub fn num_outcomes(&self) -> usize {
        self.payments.ncols()
    }

    /// Payments in outcome `s` as a vector over agents.
    pub fn outcome_column(&self, s: usize) -> Vec<f64> {
        self.payments.column(s).iter().copied().collect()
    }

    /// Largest payment of each agent.
    pub fn max_payment(&self, i: usize) -> f64 {
        self.payments.row(i).iter().copied().fold(0.0, f64::max)
    }

    /// Whether agent `i` receives nothing in every outcome.
    pub fn unpaid(&self, i: usize) -> bool {
        self.payments.row(i).iter().all(|&t| t == 0.0)
    }

    /// Violations of the contract invariants for `problem`.
    pub fn check(&self, problem: &Problem) -> Result<(), ModelError> {
        if self.n() != problem.n || self.num_outcomes() != problem.num_outcomes() {
            return Err(ModelError::Dimension(format!(
                "contract is {}x{}, problem needs {}x{}",
                self.n(),
                self.num_outcomes(),
                problem.n,
                problem.num_outcomes()
            )));
        }
        match self.payments.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            Some(&t) => Err(ModelError::Negative { what: "payment", value: t }),
            None => Ok(()),
        }
    }
}

/// Contract paying each agent a fixed share of the principal's revenue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquityContract {
    pub shares: Vec<f64>,
}

impl EquityContract {
    /// Contract paying `shares[i] * revenues[s]` to agent `i` in outcome `s`.
    pub fn to_contract(&self, revenues: &[f64]) -> Contract {
        Contract::new(DMatrix::from_fn(self.shares.len(), revenues.len(), |i, s| self.shares[i] * revenues[s]))
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if let Some(&x) = self.shares.iter().find(|x| !(**x >= 0.0 && **x <= 1.0)) {
            return Err(ModelError::Domain(format!("equity share {x} outside [0, 1]")));
        }
        let total: f64 = self.shares.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(ModelError::Domain(format!("equity shares sum to {total} > 1")));
        }
        Ok(())
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Result of problem validation; empty iff the problem is well formed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { field: field.into(), message: message.into() });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| format!("{}: {}", v.field, v.message)).collect();
        f.write_str(&parts.join("; "))
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

fn validate_network(net: &Network, n: usize, report: &mut ValidationReport) {
    let w = &net.weights;
    if w.nrows() != n || w.ncols() != n {
        report.flag("production.network.weights", format!("must be {n}x{n}, got {}x{}", w.nrows(), w.ncols()));
        return;
    }
    if !positive(net.beta) {
        report.flag("production.network.beta", "scale must be positive and finite");
    }
    for i in 0..n {
        if w[(i, i)] != 0.0 {
            report.flag(format!("production.network.weights[{i}][{i}]"), "diagonal must be zero");
        }
        for j in 0..n {
            let x = w[(i, j)];
            if !(x >= 0.0 && x.is_finite()) {
                report.flag(format!("production.network.weights[{i}][{j}]"), "weights must be finite and nonnegative");
            }
            if j > i && (x - w[(j, i)]).abs() > 1e-12 * x.abs().max(1.0) {
                report.flag(
                    format!("production.network.weights[{i}][{j}]"),
                    format!("symmetry violation: {x} vs weights[{j}][{i}] = {}", w[(j, i)]),
                );
            }
        }
    }
}

fn validate_production(prod: &ProductionFunction, n: usize, report: &mut ValidationReport) {
    let check_gamma = |gamma: &Vec<f64>, report: &mut ValidationReport| {
        if gamma.len() != n {
            report.flag("production.gamma", format!("needs {n} entries, got {}", gamma.len()));
        }
        if gamma.iter().any(|&g| !positive(g)) {
            report.flag("production.gamma", "exponents must be positive");
        }
    };
    match prod {
        ProductionFunction::QuadraticNetwork { network, standalone } => {
            validate_network(network, n, report);
            if let Some(b) = standalone {
                if b.len() != n {
                    report.flag("production.standalone", format!("needs {n} entries, got {}", b.len()));
                }
                if b.iter().any(|&x| !positive(x)) {
                    report.flag("production.standalone", "standalone coefficients must be positive");
                }
            }
        }
        ProductionFunction::CobbDouglas { gamma } => check_gamma(gamma, report),
        ProductionFunction::Ces { gamma, rho, kappa } => {
            check_gamma(gamma, report);
            if *rho == 0.0 {
                report.flag("production.rho", "rho = 0 is the Cobb-Douglas limit; use cobb_douglas");
            } else if !rho.is_finite() {
                report.flag("production.rho", "rho must be finite");
            }
            if !positive(*kappa) {
                report.flag("production.kappa", "returns to scale must be positive");
            }
        }
        ProductionFunction::CustomPolynomial { monomials } => {
            if monomials.is_empty() {
                report.flag("production.monomials", "at least one monomial required");
            }
            for (k, m) in monomials.iter().enumerate() {
                if !positive(m.coef) {
                    report.flag(format!("production.monomials[{k}].coef"), "coefficients must be positive");
                }
                if m.powers.len() != n {
                    report.flag(format!("production.monomials[{k}].powers"), format!("needs {n} entries"));
                }
            }
            for i in 0..n {
                if !monomials.iter().any(|m| m.powers.get(i).is_some_and(|&p| p > 0)) {
                    report.flag("production.monomials", format!("agent {i} does not affect performance"));
                }
            }
        }
    }
}

fn validate_outcomes(model: &OutcomeModel, report: &mut ValidationReport) {
    match model {
        OutcomeModel::BinarySuccess { success } => match *success {
            SuccessProbability::LinearCapped { slope } if !positive(slope) => {
                report.flag("outcomes.success.slope", "slope must be positive");
            }
            SuccessProbability::Logistic { scale, shift } if !positive(scale) || !shift.is_finite() => {
                report.flag("outcomes.success", "logistic needs a positive scale and finite shift");
            }
            SuccessProbability::Power { r } if !positive(r) => {
                report.flag("outcomes.success.r", "exponent must be positive");
            }
            _ => {}
        },
        OutcomeModel::MultiOutcome { theta, bias, revenues } => {
            let m = theta.len();
            if m < 2 {
                report.flag("outcomes.theta", "at least two outcomes required");
            }
            if bias.len() != m || revenues.len() != m {
                report.flag("outcomes", "theta, bias and revenues must have equal length");
            }
            if theta.iter().chain(bias).any(|x| !x.is_finite()) {
                report.flag("outcomes", "theta and bias must be finite");
            }
            if revenues.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                report.flag("outcomes.revenues", "revenues must be finite and nonnegative");
            }
        }
    }
}

/// List every violated invariant of `problem`; never fails.
pub fn validate_problem(problem: &Problem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = problem.n;
    if n == 0 {
        report.flag("n", "at least one agent required");
    }
    validate_production(&problem.production, n, &mut report);
    validate_outcomes(&problem.outcomes, &mut report);
    if problem.utilities.len() != n {
        report.flag("utilities", format!("needs {n} entries, got {}", problem.utilities.len()));
    }
    for (i, u) in problem.utilities.iter().enumerate() {
        if let Utility::Power { eta } = u {
            if !(*eta > 0.0 && *eta < 1.0) {
                report.flag(format!("utilities[{i}].eta"), "power utility needs eta in (0, 1)");
            }
        }
    }
    if problem.costs.len() != n {
        report.flag("costs", format!("needs {n} entries, got {}", problem.costs.len()));
    }
    for (i, c) in problem.costs.iter().enumerate() {
        if !positive(c.scale) {
            report.flag(format!("costs[{i}].scale"), "cost scale must be positive");
        }
        if !(c.exponent >= 2.0 && c.exponent.is_finite()) {
            report.flag(format!("costs[{i}].exponent"), "cost exponent must be at least 2");
        }
    }
    report
}
