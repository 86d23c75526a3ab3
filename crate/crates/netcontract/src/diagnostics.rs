//! Balance diagnostics of a contract at its equilibrium: curvature, marginal
//! productivity, spillovers, centrality, the performance gradient in payments,
//! and the balance residuals that vanish at an optimal contract.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumResult;
use crate::error::{Error, Result};
use crate::model::{serde_matrix, Contract, Problem, Utility};
use crate::numeric;

/// Actions above this level count as active.
pub const ACTIVITY_THRESHOLD: f64 = 1e-9;

/// `|D|` below this level leaves the balance constants undetermined.
pub const MIN_MARGINAL_REVENUE: f64 = 1e-12;

/// Balance gap of one active agent in one paid outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResidual {
    pub agent: usize,
    pub outcome: usize,
    /// `|alpha_i c_i u_i'(tau_i(s)) - lambda_s| / |lambda_s|`.
    pub value: f64,
}

/// Balance machinery at a (contract, equilibrium) pair.
///
/// Per-agent vectors have one entry per agent; entries of inactive agents are
/// zero except where noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub active_agents: Vec<usize>,
    /// Cost curvature `C_i''(a_i)`.
    pub curvature: Vec<f64>,
    /// Marginal productivity `dY/da_i / sqrt(C_i''(a_i))`.
    pub alpha: Vec<f64>,
    /// Hessian of the production function at the equilibrium.
    #[serde(with = "serde_matrix::rows")]
    pub hessian: DMatrix<f64>,
    /// Marginal payment utility `U_i = sum_s P_s'(Y) u_i(tau_i(s))`, for every agent.
    pub incentive: Vec<f64>,
    /// Solution of `c^T (I - H^{-1/2} U G H^{-1/2}) = alpha^T` over the active agents.
    pub centrality: Vec<f64>,
    /// `dY/dtau_i(s)`, rows agents, columns outcomes.
    #[serde(with = "serde_matrix::rows")]
    pub dy_dtau: DMatrix<f64>,
    /// Dampening factor `l` of the performance response.
    pub l_factor: f64,
    /// `d_j = dY/da_j * sum_s P_s''(Y) u_j(tau_j(s))`.
    pub d_vector: Vec<f64>,
    /// Mean of `alpha_i c_i u_i'(tau_i(s))` over active agents paid in outcome `s`;
    /// absent for outcomes nobody active is paid in, or when `d_term` vanishes.
    pub lambda_by_outcome: Vec<Option<f64>>,
    pub residuals: Vec<BalanceResidual>,
    /// Principal's marginal revenue `sum_s (v_s - sum_i tau_i(s)) P_s'(Y)`.
    pub d_term: f64,
    /// Spectral radius of `H^{-1/2} U G H^{-1/2}` over the active agents.
    pub spillover_radius: f64,
    pub utilities: Vec<Utility>,
    /// `u_i'(tau_i(s))`, rows agents, columns outcomes.
    #[serde(with = "serde_matrix::rows")]
    pub marginal_utility: DMatrix<f64>,
    pub probs: Vec<f64>,
    pub dprobs: Vec<f64>,
}

impl BalanceReport {
    /// Largest relative balance residual, zero when nothing is paid.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    /// `lambda_s P_s'(Y) / P_s(Y)` for every outcome with a fitted constant.
    pub fn normalized_lambdas(&self) -> Vec<(usize, f64)> {
        self.lambda_by_outcome
            .iter()
            .enumerate()
            .filter_map(|(s, l)| l.map(|l| (s, l * self.dprobs[s] / self.probs[s])))
            .collect()
    }
}

/// Multiply while treating `0 * inf` as zero.
fn times(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Assemble the full balance report.
pub fn compute_balance_report(problem: &Problem, contract: &Contract, eq: &EquilibriumResult) -> Result<BalanceReport> {
    contract.check(problem)?;
    let n = problem.n;
    let m = problem.num_outcomes();
    let a = eq.actions.as_slice();
    if a.len() != n {
        return Err(crate::model::ModelError::Dimension(format!("equilibrium has {} actions for {n} agents", a.len())).into());
    }
    let y = problem.production.value(a);
    let probs = problem.outcomes.probs(y)?;
    let grad = problem.production.gradient(a);
    let hessian = problem.production.hessian(a);
    let revenues = problem.outcomes.revenues();

    let active: Vec<usize> = (0..n).filter(|&i| a[i] > ACTIVITY_THRESHOLD).collect();
    let curvature: Vec<f64> = (0..n).map(|i| problem.costs[i].curvature(a[i])).collect();
    let pay_utility = DMatrix::from_fn(n, m, |i, s| problem.utilities[i].value(contract.payments[(i, s)]));
    let marginal_utility = DMatrix::from_fn(n, m, |i, s| problem.utilities[i].marginal(contract.payments[(i, s)]));
    let incentive: Vec<f64> = (0..n).map(|i| (0..m).map(|s| probs.dp[s] * pay_utility[(i, s)]).sum()).collect();
    let d_vector: Vec<f64> =
        (0..n).map(|j| times(grad[j], (0..m).map(|s| probs.d2p[s] * pay_utility[(j, s)]).sum())).collect();

    let k = active.len();
    let mut alpha = vec![0.0; n];
    for &i in &active {
        alpha[i] = grad[i] / curvature[i].sqrt();
    }
    let inv_sqrt_h: Vec<f64> = active.iter().map(|&i| 1.0 / curvature[i].sqrt()).collect();
    let spill = DMatrix::from_fn(k, k, |r, c| {
        let (i, j) = (active[r], active[c]);
        inv_sqrt_h[r] * incentive[i] * hessian[(i, j)] * inv_sqrt_h[c]
    });
    let spillover_radius = numeric::spectral_radius(&spill);
    let system = (DMatrix::identity(k, k) - &spill).transpose();
    let alpha_active = DVector::from_fn(k, |r, _| alpha[active[r]]);
    let c_active = numeric::solve(&system, &alpha_active).ok_or_else(|| Error::Singular {
        context: "I - H^{-1/2} U G H^{-1/2}".into(),
        spectral_radius: Some(spillover_radius),
    })?;
    let mut centrality = vec![0.0; n];
    for (r, &i) in active.iter().enumerate() {
        centrality[i] = c_active[r];
    }

    // l = 1 / (1 - grad^T [H - U G]^{-1} d), all restricted to the active agents.
    let response = DMatrix::from_fn(k, k, |r, c| {
        let (i, j) = (active[r], active[c]);
        let diag = if r == c { curvature[i] } else { 0.0 };
        diag - incentive[i] * hessian[(i, j)]
    });
    let d_active = DVector::from_fn(k, |r, _| d_vector[active[r]]);
    let l_factor = if d_active.iter().all(|&v| v == 0.0) {
        1.0
    } else {
        let z = numeric::solve(&response, &d_active)
            .ok_or_else(|| Error::Singular { context: "H - U G".into(), spectral_radius: Some(spillover_radius) })?;
        let feedback: f64 = active.iter().enumerate().map(|(r, &i)| grad[i] * z[r]).sum();
        1.0 / (1.0 - feedback)
    };

    // Effect on Y of a unit incentive to each agent: alpha_i c_i for active agents;
    // for inactive agents, the push from zero effort plus the spillover rounds it triggers.
    let mut leverage = vec![0.0; n];
    for &i in &active {
        leverage[i] = alpha[i] * centrality[i];
    }
    for j in (0..n).filter(|j| !active.contains(j)) {
        if incentive[j] != 0.0 || grad[j] <= 0.0 {
            continue;
        }
        let spill: f64 = active
            .iter()
            .enumerate()
            .map(|(r, &kk)| c_active[r] * inv_sqrt_h[r] * incentive[kk] * hessian[(kk, j)])
            .sum();
        let push = grad[j] + spill;
        leverage[j] = if push <= 0.0 {
            0.0
        } else if curvature[j] == 0.0 {
            f64::INFINITY
        } else {
            grad[j] * push / curvature[j]
        };
    }
    let dy_dtau = DMatrix::from_fn(n, m, |i, s| {
        let inactive = !active.contains(&i);
        if inactive && (probs.dp[s] <= 0.0 || incentive[i] != 0.0) {
            return 0.0;
        }
        times(l_factor * probs.dp[s], times(leverage[i], marginal_utility[(i, s)]))
    });

    let d_term: f64 = (0..m).map(|s| (revenues[s] - contract.payments.column(s).sum()) * probs.dp[s]).sum();
    let mut lambda_by_outcome = vec![None; m];
    let mut residuals = Vec::new();
    if d_term.abs() >= MIN_MARGINAL_REVENUE {
        for (s, lambda) in lambda_by_outcome.iter_mut().enumerate() {
            let paid: Vec<(usize, f64)> = active
                .iter()
                .filter(|&&i| contract.payments[(i, s)] > 0.0)
                .map(|&i| (i, leverage[i] * marginal_utility[(i, s)]))
                .collect();
            if paid.is_empty() {
                continue;
            }
            let mean = paid.iter().map(|(_, v)| v).sum::<f64>() / paid.len() as f64;
            *lambda = Some(mean);
            residuals.extend(paid.iter().map(|&(agent, v)| BalanceResidual {
                agent,
                outcome: s,
                value: (v - mean).abs() / mean.abs(),
            }));
        }
    }

    Ok(BalanceReport {
        active_agents: active,
        curvature,
        alpha,
        hessian,
        incentive,
        centrality,
        dy_dtau,
        l_factor,
        d_vector,
        lambda_by_outcome,
        residuals,
        d_term,
        spillover_radius,
        utilities: problem.utilities.clone(),
        marginal_utility,
        probs: probs.p,
        dprobs: probs.dp,
    })
}

/// `dY/dtau_i(s)` for every agent and outcome.
pub fn marginal_performance(problem: &Problem, contract: &Contract, eq: &EquilibriumResult) -> Result<DMatrix<f64>> {
    Ok(compute_balance_report(problem, contract, eq)?.dy_dtau)
}

/// Gap of one ratio identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioGap {
    /// The agents compared (equal for a cross-outcome gap).
    pub agents: (usize, usize),
    /// The outcomes compared (equal for a cross-agent gap).
    pub outcomes: (usize, usize),
    pub gap: f64,
}

/// Outcome of a ratio-identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub gaps: Vec<RatioGap>,
    pub max_gap: f64,
    /// Cross-agent check: payments of every pair of agents with identical
    /// strictly concave utilities are ordered the same way in every outcome.
    /// Cross-outcome check: `P_s'(Y) > 0` wherever someone is paid.
    pub structure_holds: bool,
    pub notes: Vec<String>,
}

impl RatioCheck {
    fn new(gaps: Vec<RatioGap>, structure_holds: bool, notes: Vec<String>) -> Self {
        let max_gap = gaps.iter().map(|g| g.gap).fold(0.0, f64::max);
        Self { gaps, max_gap, structure_holds, notes }
    }
}

/// Payments this small count as zero in the structural checks.
const PAYMENT_FLOOR: f64 = 1e-9;

/// For co-paid active agents `i, j` in outcome `s`, the gap
/// `|u_i'/u_j' - alpha_j c_j / (alpha_i c_i)|`, plus the payment ordering of
/// agents with identical strictly concave utilities.
pub fn check_cross_agent_ratios(report: &BalanceReport, contract: &Contract) -> RatioCheck {
    let n = contract.n();
    let m = contract.num_outcomes();
    let active = &report.active_agents;
    let mut gaps = Vec::new();
    for s in 0..m {
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                if contract.payments[(i, s)] <= 0.0 || contract.payments[(j, s)] <= 0.0 {
                    continue;
                }
                let lhs = report.marginal_utility[(i, s)] / report.marginal_utility[(j, s)];
                let rhs = report.alpha[j] * report.centrality[j] / (report.alpha[i] * report.centrality[i]);
                gaps.push(RatioGap { agents: (i, j), outcomes: (s, s), gap: (lhs - rhs).abs() });
            }
        }
    }
    let mut notes = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let u = report.utilities[i];
            if u != report.utilities[j] || u == Utility::Linear {
                continue;
            }
            let diff: Vec<f64> = (0..m).map(|s| contract.payments[(i, s)] - contract.payments[(j, s)]).collect();
            let up = diff.iter().any(|&d| d > PAYMENT_FLOOR);
            let down = diff.iter().any(|&d| d < -PAYMENT_FLOOR);
            if up && down {
                notes.push(format!("payments of agents {i} and {j} are not ordered across outcomes"));
            }
        }
    }
    RatioCheck::new(gaps, notes.is_empty(), notes)
}

/// For each active agent paid in outcomes `s1 < s2`, the gap
/// `|u'(tau(s1))/u'(tau(s2)) - (P_{s1}/P'_{s1}) (P'_{s2}/P_{s2})|`, plus the
/// requirement that paid outcomes have `P_s'(Y) > 0`.
pub fn check_cross_outcome_ratios(report: &BalanceReport, contract: &Contract, eq: &EquilibriumResult) -> RatioCheck {
    let m = contract.num_outcomes();
    let (p, dp) = if eq.probs.len() == m {
        (eq.probs.clone(), report.dprobs.clone())
    } else {
        (report.probs.clone(), report.dprobs.clone())
    };
    let mut gaps = Vec::new();
    for &i in &report.active_agents {
        let paid: Vec<usize> = (0..m).filter(|&s| contract.payments[(i, s)] > 0.0).collect();
        for (x, &s1) in paid.iter().enumerate() {
            for &s2 in &paid[x + 1..] {
                let lhs = report.marginal_utility[(i, s1)] / report.marginal_utility[(i, s2)];
                let rhs = (p[s1] / dp[s1]) * (dp[s2] / p[s2]);
                gaps.push(RatioGap { agents: (i, i), outcomes: (s1, s2), gap: (lhs - rhs).abs() });
            }
        }
    }
    let mut notes = Vec::new();
    for (s, &slope) in dp.iter().enumerate().take(m) {
        let paid = (0..contract.n()).any(|i| contract.payments[(i, s)] > PAYMENT_FLOOR);
        if paid && slope <= 0.0 {
            notes.push(format!("outcome {s} is paid but P_s'(Y) = {slope}"));
        }
    }
    RatioCheck::new(gaps, notes.is_empty(), notes)
}
