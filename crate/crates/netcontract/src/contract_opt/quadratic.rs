//! Optimal contracts of the quadratic network environment with a binary outcome.

use nalgebra::DVector;

use super::general::optimize_general;
use super::{finish, optimal_active_set_with_cap, ActiveSetCandidate, Method, OptimalContractResult, OptimizerOptions};
use crate::equilibrium::solve_equilibrium_quadratic_binary;
use crate::error::{ensure_valid, Error, Result};
use crate::model::{Contract, Network, Problem, SuccessProbability};
use crate::numeric;

/// `phi(p, lambda) = p/q + p^2 lambda / (2 q^2)` with `q = 1 - lambda p`: performance
/// per unit of total share when active agents hold balanced equity `lambda`.
pub(crate) fn phi(p: f64, lambda: f64) -> f64 {
    let q = 1.0 - lambda * p;
    p / q + p * p * lambda / (2.0 * q * q)
}

/// `(d phi / dp, d phi / d lambda)`.
pub(crate) fn phi_partials(p: f64, lambda: f64) -> (f64, f64) {
    let q = 1.0 - lambda * p;
    let dp = (1.0 + p * lambda) / (q * q) + p * p * lambda * lambda / (q * q * q);
    let dl = 1.5 * p * p / (q * q) + p * p * p * lambda / (q * q * q);
    (dp, dl)
}

/// Equilibrium performance `Y = s phi(P'(Y), lambda)` of a balanced contract with
/// total share `s` and balance constant `lambda`, restricted to `lambda P'(Y) < 1`.
/// `None` when no such level exists or it reaches the cap of `P`.
pub(crate) fn balanced_performance(p: &SuccessProbability, s: f64, lambda: f64) -> Option<f64> {
    if s <= 0.0 {
        return Some(0.0);
    }
    let slope = |y: f64| p.derivs_unchecked(y).1;
    let y = if let SuccessProbability::LinearCapped { slope } = *p {
        if lambda * slope >= 1.0 {
            return None;
        }
        s * phi(slope, lambda)
    } else {
        let lo = if lambda * slope(0.0) < 1.0 {
            0.0
        } else {
            let mut hi = 1.0;
            while lambda * slope(hi) >= 1.0 {
                hi *= 2.0;
                if hi > 1e15 {
                    return None;
                }
            }
            let y0 = numeric::bisect(|y| 1.0 - lambda * slope(y), 0.0, hi);
            let mut lo = y0;
            while lambda * slope(lo) >= 1.0 {
                lo = lo * (1.0 + 1e-12) + 1e-300;
            }
            lo
        };
        let excess = |y: f64| s * phi(slope(y), lambda) - y;
        let mut hi = (2.0 * lo).max(1.0);
        while excess(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e15 {
                return None;
            }
        }
        numeric::bisect(excess, lo, hi)
    };
    match p.cap() {
        Some(cap) if y >= cap => None,
        _ => Some(y),
    }
}

/// Principal's payoff `(1 - s) P(Y(s))` along balanced contracts with `lambda = s / k`.
pub(crate) fn share_payoff(p: &SuccessProbability, k: f64, s: f64) -> f64 {
    match balanced_performance(p, s, s / k) {
        Some(y) => (1.0 - s) * p.value(y),
        None => f64::NEG_INFINITY,
    }
}

/// `d/ds` of [`share_payoff`].
pub(crate) fn share_payoff_slope(p: &SuccessProbability, k: f64, s: f64) -> Option<f64> {
    let lambda = s / k;
    let y = balanced_performance(p, s, lambda)?;
    let (pv, dp, d2p) = p.derivs_unchecked(y);
    let (phi_p, phi_l) = phi_partials(dp, lambda);
    let dy_ds = (phi(dp, lambda) + s * phi_l / k) / (1.0 - s * phi_p * d2p);
    Some(-pv + (1.0 - s) * dp * dy_ds)
}

/// Payoff-maximizing total share for inverse mass `k = 1^T G~^{-1} 1`: golden-section
/// after a pre-scan, polished by bisection on the analytic payoff slope.
pub(crate) fn optimal_share(p: &SuccessProbability, k: f64, scan_points: usize) -> Option<f64> {
    let (a, b) = numeric::scan_then_golden(|s| share_payoff(p, k, s), 0.0, 1.0, scan_points, 1e-7)?;
    let mid = 0.5 * (a + b);
    let width = (b - a).max(1e-7);
    let (lo, hi) = ((mid - width).max(0.0), (mid + width).min(1.0));
    let s = match (share_payoff_slope(p, k, lo), share_payoff_slope(p, k, hi)) {
        (Some(dl), Some(dh)) if dl > 0.0 && dh < 0.0 => {
            numeric::bisect(|s| share_payoff_slope(p, k, s).unwrap_or(f64::NEG_INFINITY), lo, hi)
        }
        _ => mid,
    };
    Some(s)
}

fn relative_spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    var.sqrt() / mean.abs().max(1e-300)
}

/// Optimal contract when production is `Y = 1^T a + a^T G a / 2`, agents are
/// risk neutral with unit quadratic costs, and only success is rewarded.
///
/// Pays the best active set `A` in proportion to `G~^{-1} 1` and chooses the
/// total share by a one-dimensional search on the exact payoff. Falls back to
/// [`optimize_general`] when the balance system of `A` is singular.
pub fn optimize_quadratic_binary(
    network: &Network,
    p: &SuccessProbability,
    opts: &OptimizerOptions,
) -> Result<OptimalContractResult> {
    let problem = Problem::quadratic_binary(network.clone(), None, p.clone());
    ensure_valid(&problem)?;
    if !p.concave_on_nonnegative() {
        return Err(Error::Precondition("success probability must be concave on Y >= 0".into()));
    }
    let candidates = optimal_active_set_with_cap(network, p, opts.enumeration_cap)?;
    let Some(best) = candidates.first() else {
        return Err(Error::Precondition("network has no agents".into()));
    };
    if best.singular {
        let mut result = optimize_general(&problem, opts)?;
        result.warnings.push(format!(
            "balance system of active set {:?} is singular; used the general optimizer",
            best.members
        ));
        return Ok(result);
    }
    solve_on_active_set(&problem, network, p, best, opts)
}

fn solve_on_active_set(
    problem: &Problem,
    network: &Network,
    p: &SuccessProbability,
    set: &ActiveSetCandidate,
    opts: &OptimizerOptions,
) -> Result<OptimalContractResult> {
    let n = network.n();
    let k = set.inverse_mass();
    let mut warnings = Vec::new();
    let s = optimal_share(p, k, opts.scan_points)
        .ok_or_else(|| Error::NoEquilibrium("no total share admits an equilibrium".into()))?;
    let s = if share_payoff(p, k, s) > p.value(0.0) { s } else { 0.0 };
    let mut tau = vec![0.0; n];
    for (&i, &w) in set.members.iter().zip(&set.shares) {
        tau[i] = s * w;
    }
    let equilibrium = solve_equilibrium_quadratic_binary(network, &vec![1.0; n], &tau, p)?;
    let g = network.effective();
    let tau_vec = DVector::from_column_slice(&tau);
    let equity = &g * &tau_vec;
    let spill = &g * &equilibrium.actions;
    let on_set = |v: &DVector<f64>| set.members.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let (equity, spill) = (on_set(&equity), on_set(&spill));
    for (name, values) in [("equity", &equity), ("action", &spill)] {
        let spread = relative_spread(values);
        if set.members.len() > 1 && s > 0.0 && spread > 1e-8 {
            warnings.push(format!("neighborhood {name} spread {spread:e} exceeds 1e-8"));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut result = finish(problem, Contract::success_only(&tau), equilibrium, Method::Quadratic, warnings);
    result.balance_constant = Some(mean(&equity));
    result.neighborhood_action_constant = Some(mean(&spill));
    Ok(result)
}
