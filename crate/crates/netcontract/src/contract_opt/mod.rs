//! Optimal contracts: a projected-gradient optimizer for general environments,
//! the balanced-equity solution of the quadratic network case, optimal active
//! sets, and the Cobb-Douglas and CES closed forms.

mod active_set;
mod closed_form;
pub(crate) mod general;
mod quadratic;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{compute_balance_report, BalanceReport};
use crate::equilibrium::{EquilibriumOptions, EquilibriumResult};
use crate::model::{Contract, Problem};

pub use active_set::{optimal_active_set, optimal_active_set_with_cap, ActiveSetCandidate};
pub use closed_form::{
    closed_form_ces, closed_form_ces_with, closed_form_cobb_douglas, closed_form_cobb_douglas_with, share_polynomial,
    total_share_root,
};
pub use general::optimize_general;
pub use quadratic::optimize_quadratic_binary;

/// Payments at or below this level count as zero when reporting active sets.
pub const PAYMENT_FLOOR: f64 = 1e-9;

/// Which solution path produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    General,
    Quadratic,
    CobbDouglas,
    Ces,
    Equity,
}

/// An optimal (or best found) contract with its equilibrium and certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalContractResult {
    pub contract: Contract,
    pub equilibrium: EquilibriumResult,
    /// `sum_s (v_s - sum_i tau_i(s)) P_s(Y*)`.
    pub principal_payoff: f64,
    /// Agents paid in some outcome.
    pub active_set: Vec<usize>,
    /// Largest projected-gradient component of the principal's payoff.
    pub kkt_residual: f64,
    pub method: Method,
    /// Common value of `(G tau)_i` over the active agents (quadratic path).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_constant: Option<f64>,
    /// Common value of `(G a*)_i` over the active agents (quadratic path).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood_action_constant: Option<f64>,
    /// Largest relative balance residual at the result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_balance_residual: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Settings of the contract optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Number of deterministic starting contracts of the general optimizer.
    pub starts: usize,
    /// Largest admissible KKT residual.
    pub tol: f64,
    pub max_iterations: usize,
    /// Largest network size for active-set enumeration.
    pub enumeration_cap: usize,
    /// Grid points of the pre-scan before a one-dimensional golden-section search.
    pub scan_points: usize,
    /// Payment assigned to a zero coordinate whose payoff gradient is infinite.
    pub inada_floor: f64,
    pub equilibrium: EquilibriumOptions,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            tol: 1e-9,
            max_iterations: 3000,
            enumeration_cap: 16,
            scan_points: 64,
            inada_floor: 1e-6,
            equilibrium: EquilibriumOptions { tol: 1e-12, max_sweeps: 1000, ..EquilibriumOptions::default() },
        }
    }
}

/// Agents paid more than [`PAYMENT_FLOOR`] in some outcome.
pub(crate) fn paid_agents(contract: &Contract) -> Vec<usize> {
    (0..contract.n()).filter(|&i| contract.max_payment(i) > PAYMENT_FLOOR).collect()
}

/// `dPi/dtau_i(s) = D dY/dtau_i(s) - P_s(Y)` from a balance report.
pub(crate) fn payoff_gradient(report: &BalanceReport) -> DMatrix<f64> {
    let dy = &report.dy_dtau;
    DMatrix::from_fn(dy.nrows(), dy.ncols(), |i, s| {
        let direct = if report.d_term == 0.0 || dy[(i, s)] == 0.0 { 0.0 } else { report.d_term * dy[(i, s)] };
        direct - report.probs[s]
    })
}

/// `max_k |max(x_k + g_k, 0) - x_k|` over all payments.
pub(crate) fn contract_kkt(contract: &Contract, grad: &DMatrix<f64>) -> f64 {
    contract
        .payments
        .iter()
        .zip(grad.iter())
        .map(|(&x, &g)| ((x + g).max(0.0) - x).abs())
        .fold(0.0, f64::max)
}

/// Package a contract and its equilibrium with payoff, KKT residual and balance residual.
pub(crate) fn finish(
    problem: &Problem,
    contract: Contract,
    equilibrium: EquilibriumResult,
    method: Method,
    mut warnings: Vec<String>,
) -> OptimalContractResult {
    let principal_payoff = problem.principal_payoff(&contract, equilibrium.performance);
    let (kkt_residual, max_balance_residual) = match compute_balance_report(problem, &contract, &equilibrium) {
        Ok(report) => (contract_kkt(&contract, &payoff_gradient(&report)), Some(report.max_residual())),
        Err(e) => {
            warnings.push(format!("balance diagnostics unavailable: {e}"));
            (f64::NAN, None)
        }
    };
    OptimalContractResult {
        active_set: paid_agents(&contract),
        contract,
        equilibrium,
        principal_payoff,
        kkt_residual,
        method,
        balance_constant: None,
        neighborhood_action_constant: None,
        max_balance_residual,
        warnings,
    }
}
