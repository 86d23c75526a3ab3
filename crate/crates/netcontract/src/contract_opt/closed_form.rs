//! Closed-form optimal contracts: Cobb-Douglas and CES production, and the
//! optimal total share of a clique under a linear success probability.

use nalgebra::DVector;

use super::{finish, Method, OptimalContractResult, OptimizerOptions};
use crate::equilibrium::{EquilibriumResult, Game};
use crate::error::{ensure_valid, Error, Result};
use crate::model::{Contract, OutcomeModel, ProductionFunction, Problem, SuccessProbability};
use crate::numeric;

/// `p(s) = -(beta kappa)^2 s^3 + 3 beta kappa k s^2 - 4 k^2 s + 2 k^2`.
pub fn share_polynomial(beta: f64, kappa: f64, kstar: f64, s: f64) -> f64 {
    let bk = beta * kappa;
    -bk * bk * s.powi(3) + 3.0 * bk * kstar * s * s - 4.0 * kstar * kstar * s + 2.0 * kstar * kstar
}

/// Optimal total share under `P(Y) = kappa Y`: the root in `[1/2, 1)` of
/// [`share_polynomial`], where `kstar = 1^T G~^{-1} 1` for the unscaled weights
/// and `beta` scales every link.
pub fn total_share_root(beta: f64, kappa: f64, kstar: f64) -> Result<f64> {
    if !(beta >= 0.0 && kappa > 0.0 && kstar > 0.0) {
        return Err(Error::Precondition(format!(
            "need beta >= 0, kappa > 0 and k* > 0 (got {beta}, {kappa}, {kstar})"
        )));
    }
    if beta * kappa >= kstar {
        return Err(Error::Precondition(format!("need beta kappa < k* (got {} >= {kstar})", beta * kappa)));
    }
    let p = |s: f64| share_polynomial(beta, kappa, kstar, s);
    if p(0.5) == 0.0 {
        return Ok(0.5);
    }
    if !(p(0.5) > 0.0 && p(1.0) < 0.0) {
        return Err(Error::Precondition("share polynomial does not change sign on (1/2, 1)".into()));
    }
    Ok(numeric::bisect(p, 0.5, 1.0))
}

/// `ln P'(Y)` computed without underflow.
fn log_slope(p: &SuccessProbability, y: f64) -> f64 {
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    match *p {
        SuccessProbability::LinearCapped { slope } => slope.ln(),
        SuccessProbability::Logistic { scale, shift } => {
            let z = (y - shift) / scale;
            -softplus(-z) - softplus(z) - scale.ln()
        }
        SuccessProbability::Power { r } => r.ln() - (r + 1.0) * y.ln_1p(),
    }
}

/// Largest `Y > 0` with `A ln Y - B - ln P'(Y) = 0`, the equilibrium condition of
/// the log-transformed game. `Ok(None)` when only zero performance solves it.
fn transformed_performance(p: &SuccessProbability, a: f64, b: f64) -> Result<Option<f64>> {
    let h = |u: f64| a * u - b - log_slope(p, u.exp());
    let y = if let SuccessProbability::LinearCapped { slope } = *p {
        ((b + slope.ln()) / a).exp()
    } else {
        let mut hi = 1.0;
        while h(hi) <= 0.0 {
            hi = 2.0 * hi + 1.0;
            if hi > 700.0 {
                return Err(Error::NoEquilibrium("performance of the transformed game is unbounded".into()));
            }
        }
        let mut lo = hi;
        loop {
            let next = lo - 0.25;
            if next < -740.0 {
                return Ok(None);
            }
            if h(next) <= 0.0 {
                break numeric::bisect(h, next, lo).exp();
            }
            lo = next;
        }
    };
    match p.cap() {
        Some(cap) if y >= cap => Ok(None),
        _ => Ok(Some(y)),
    }
}

/// The equilibrium of a power-form production game paying `tau` on success.
struct Transformed {
    actions: Vec<f64>,
    performance: f64,
}

fn closed_form(
    problem: &Problem,
    p: &SuccessProbability,
    shares: &[f64],
    solve: &dyn Fn(&[f64]) -> Result<Option<Transformed>>,
    method: Method,
    opts: &OptimizerOptions,
) -> Result<OptimalContractResult> {
    let tau_at = |s: f64| shares.iter().map(|w| s * w).collect::<Vec<f64>>();
    let payoff = |s: f64| match solve(&tau_at(s)) {
        Ok(Some(t)) => (1.0 - s) * p.value(t.performance),
        Ok(None) => (1.0 - s) * p.value(0.0),
        Err(_) => f64::NEG_INFINITY,
    };
    let (a, b) = numeric::scan_then_golden(payoff, 0.0, 1.0, opts.scan_points, 1e-12)
        .ok_or_else(|| Error::NoEquilibrium("no total share admits an equilibrium".into()))?;
    let s = 0.5 * (a + b);
    let tau = tau_at(s);
    let contract = Contract::success_only(&tau);
    let mut warnings = Vec::new();
    let (actions, performance) = match solve(&tau)? {
        Some(t) => (t.actions, t.performance),
        None => {
            warnings.push("only the zero-effort equilibrium exists at the best share".into());
            (vec![0.0; problem.n], 0.0)
        }
    };
    let game = Game::new(problem, &contract);
    let residual = if performance > 0.0 { game.residual(&actions) } else { 0.0 };
    let equilibrium = EquilibriumResult {
        probs: problem.outcomes.prob_values(performance),
        actions: DVector::from_vec(actions),
        performance,
        iterations: 0,
        residual,
        spectral_margin: None,
        global_check_passed: None,
    };
    Ok(finish(problem, contract, equilibrium, method, warnings))
}

/// Optimal contract for `Y = prod_i a_i^gamma_i` with risk-neutral agents, unit
/// quadratic costs and a binary outcome: payments proportional to `gamma`,
/// scaled by a one-dimensional search on the log-transformed game.
pub fn closed_form_cobb_douglas(gamma: &[f64], p: &SuccessProbability) -> Result<OptimalContractResult> {
    closed_form_cobb_douglas_with(gamma, p, &OptimizerOptions::default())
}

/// [`closed_form_cobb_douglas`] with explicit options.
pub fn closed_form_cobb_douglas_with(
    gamma: &[f64],
    p: &SuccessProbability,
    opts: &OptimizerOptions,
) -> Result<OptimalContractResult> {
    let problem = Problem::risk_neutral(
        ProductionFunction::CobbDouglas { gamma: gamma.to_vec() },
        OutcomeModel::binary(p.clone()),
    );
    ensure_valid(&problem)?;
    let total: f64 = gamma.iter().sum();
    if matches!(p, SuccessProbability::LinearCapped { .. }) && total >= 2.0 {
        return Err(Error::Precondition(format!(
            "linear success probability needs sum(gamma) < 2 (got {total})"
        )));
    }
    let shares: Vec<f64> = gamma.iter().map(|g| g / total).collect();
    let solve = |tau: &[f64]| -> Result<Option<Transformed>> {
        let log_k: f64 = gamma.iter().zip(tau).map(|(g, t)| 0.5 * g * (t * g).ln()).sum();
        let Some(y) = transformed_performance(p, (2.0 - total) / total, 2.0 * log_k / total)? else {
            return Ok(None);
        };
        let slope = p.derivs_unchecked(y).1;
        let actions = gamma.iter().zip(tau).map(|(g, t)| (t * g * slope * y).sqrt()).collect();
        Ok(Some(Transformed { actions, performance: y }))
    };
    closed_form(&problem, p, &shares, &solve, Method::CobbDouglas, opts)
}

/// Optimal contract for `Y = (sum_i gamma_i a_i^rho)^(kappa / rho)` with `rho < 1`,
/// risk-neutral agents, unit quadratic costs and a binary outcome: payments
/// proportional to `gamma_i^(1 / (1 - rho))`, scaled by a one-dimensional search.
pub fn closed_form_ces(gamma: &[f64], rho: f64, kappa: f64, p: &SuccessProbability) -> Result<OptimalContractResult> {
    closed_form_ces_with(gamma, rho, kappa, p, &OptimizerOptions::default())
}

/// [`closed_form_ces`] with explicit options.
pub fn closed_form_ces_with(
    gamma: &[f64],
    rho: f64,
    kappa: f64,
    p: &SuccessProbability,
    opts: &OptimizerOptions,
) -> Result<OptimalContractResult> {
    if !(rho < 1.0) {
        return Err(Error::Precondition(format!("CES closed form needs rho < 1 (got {rho})")));
    }
    let problem = Problem::risk_neutral(
        ProductionFunction::Ces { gamma: gamma.to_vec(), rho, kappa },
        OutcomeModel::binary(p.clone()),
    );
    ensure_valid(&problem)?;
    if matches!(p, SuccessProbability::LinearCapped { .. }) && kappa >= 2.0 {
        return Err(Error::Precondition(format!("linear success probability needs kappa < 2 (got {kappa})")));
    }
    let weights: Vec<f64> = gamma.iter().map(|g| g.powf(1.0 / (1.0 - rho))).collect();
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let exponent = rho / (2.0 - rho);
    let solve = |tau: &[f64]| -> Result<Option<Transformed>> {
        let q: f64 = gamma.iter().zip(tau).map(|(g, t)| g * (t * g).powf(exponent)).sum();
        let b = ((2.0 - rho) / rho) * q.ln() + kappa.ln();
        let Some(y) = transformed_performance(p, (2.0 - kappa) / kappa, b)? else {
            return Ok(None);
        };
        let slope = p.derivs_unchecked(y).1;
        let aggregate = y.powf(rho / kappa);
        let w = kappa * slope * y / aggregate;
        let actions = gamma.iter().zip(tau).map(|(g, t)| (t * g * w).powf(1.0 / (2.0 - rho))).collect();
        Ok(Some(Transformed { actions, performance: y }))
    };
    closed_form(&problem, p, &shares, &solve, Method::Ces, opts)
}
