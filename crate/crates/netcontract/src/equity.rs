//! Equity contracts: each agent receives a fixed share of the principal's revenue.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contract_opt::general::{multi_start, Parametrization};
use crate::contract_opt::{optimize_general, Method, OptimalContractResult, OptimizerOptions, PAYMENT_FLOOR};
use crate::diagnostics::compute_balance_report;
use crate::equilibrium::{solve_equilibrium_general, EquilibriumResult};
use crate::error::{ensure_valid, Result};
use crate::model::{Contract, EquityContract, Problem};

/// Equilibrium under the contract paying `sigma_i v_s` to agent `i` in outcome `s`.
pub fn solve_equity_equilibrium(problem: &Problem, sigma: &EquityContract) -> Result<EquilibriumResult> {
    ensure_valid(problem)?;
    sigma.check()?;
    let contract = sigma.to_contract(&problem.outcomes.revenues());
    let start = if problem.production.singular_at_zero() { 1.0 } else { 0.0 };
    solve_equilibrium_general(problem, &contract, &vec![start; problem.n])
}

/// Shares in `{sigma >= 0, sum(sigma) <= 1}` mapped to contracts.
struct Shares {
    revenues: Vec<f64>,
    n: usize,
}

impl Parametrization for Shares {
    fn dim(&self) -> usize {
        self.n
    }

    fn contract(&self, x: &[f64]) -> Contract {
        Contract::new(DMatrix::from_fn(self.n, self.revenues.len(), |i, s| x[i] * self.revenues[s]))
    }

    fn pullback(&self, grad: &DMatrix<f64>) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.revenues.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(s, v)| v * grad[(i, s)]).sum())
            .collect()
    }

    fn project(&self, x: &mut [f64]) {
        let clamped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        if clamped.iter().sum::<f64>() <= 1.0 {
            x.copy_from_slice(&clamped);
            return;
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut cumulative = 0.0;
        let mut theta = 0.0;
        for (k, &v) in sorted.iter().enumerate() {
            cumulative += v;
            let candidate = (cumulative - 1.0) / (k + 1) as f64;
            if v - candidate > 0.0 {
                theta = candidate;
            }
        }
        for v in x.iter_mut() {
            *v = (*v - theta).max(0.0);
        }
    }

    /// Equal shares summing to one quarter, then that profile halved with one
    /// agent's share raised, agent after agent.
    fn starts(&self, count: usize) -> Vec<Vec<f64>> {
        let base = 0.25 / self.n as f64;
        (0..count)
            .map(|j| {
                let mut x = vec![base; self.n];
                if j > 0 {
                    let k = (j - 1) % self.n;
                    for v in x.iter_mut() {
                        *v *= 0.5;
                    }
                    x[k] += 0.25 * (1.0 + ((j - 1) / self.n) as f64) / 2.0;
                }
                x
            })
            .collect()
    }
}

/// Balance certificate and comparison of an optimal equity contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityDiagnostics {
    pub result: OptimalContractResult,
    /// `alpha_i c_i sum_s P_s'(Y*) v_s u_i'(sigma_i v_s)` per agent with a positive
    /// share and positive action; absent for the others.
    pub balance_values: Vec<Option<f64>>,
    /// Largest relative deviation of `balance_values` from their mean.
    pub balance_residual: f64,
    /// Payoff of the unrestricted optimal contract, when computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unrestricted_payoff: Option<f64>,
}

/// Optimal equity contract by projected-gradient ascent on the shares, reported
/// side by side with the unrestricted optimal payoff.
pub fn optimize_equity(problem: &Problem, opts: &OptimizerOptions) -> Result<(EquityContract, EquityDiagnostics)> {
    optimize_equity_with(problem, opts, true)
}

/// [`optimize_equity`], optionally skipping the unrestricted comparison.
pub fn optimize_equity_with(
    problem: &Problem,
    opts: &OptimizerOptions,
    compare_unrestricted: bool,
) -> Result<(EquityContract, EquityDiagnostics)> {
    ensure_valid(problem)?;
    let revenues = problem.outcomes.revenues();
    let param = Shares { revenues: revenues.clone(), n: problem.n };
    let result = multi_start(problem, &param, opts, Method::Equity)?;
    let top = revenues.iter().copied().fold(0.0, f64::max);
    let shares: Vec<f64> = (0..problem.n).map(|i| if top > 0.0 { result.contract.max_payment(i) / top } else { 0.0 }).collect();

    let report = compute_balance_report(problem, &result.contract, &result.equilibrium)?;
    let balance_values: Vec<Option<f64>> = (0..problem.n)
        .map(|i| {
            if shares[i] <= PAYMENT_FLOOR || !report.active_agents.contains(&i) {
                return None;
            }
            let inner: f64 = revenues
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(s, v)| report.dprobs[s] * v * report.marginal_utility[(i, s)])
                .sum();
            Some(report.alpha[i] * report.centrality[i] * inner)
        })
        .collect();
    let present: Vec<f64> = balance_values.iter().flatten().copied().collect();
    let balance_residual = if present.is_empty() {
        0.0
    } else {
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        present.iter().map(|v| (v - mean).abs() / mean.abs()).fold(0.0, f64::max)
    };
    let unrestricted_payoff = if compare_unrestricted {
        match optimize_general(problem, opts) {
            Ok(r) => Some(r.principal_payoff),
            Err(crate::Error::OptimizerFailed { best }) => Some(best.principal_payoff),
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok((EquityContract { shares }, EquityDiagnostics { result, balance_values, balance_residual, unrestricted_payoff }))
}
