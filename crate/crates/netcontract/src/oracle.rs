//! Brute-force reference computations used to cross-check the analytic solvers:
//! grid-search best responses, grid search over contracts, and finite
//! differences. Depends on the model types only.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Contract, Problem};

/// Points of the per-agent action grid.
pub const ACTION_GRID: usize = 1024;

/// Largest number of free contract coordinates for [`brute_force_optimal_contract`].
pub const MAX_GRID_DIMENSION: usize = 6;

/// Failures of the oracle computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid has {dims} free coordinates; the oracle supports at most {max}")]
    Dimension { dims: usize, max: usize },
    #[error("best-response iteration did not settle after {iterations} sweeps (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("evaluation failed at {point}: {message}")]
    Evaluation { point: f64, message: String },
}

/// Action profile found by best-response iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEquilibrium {
    pub actions: Vec<f64>,
    pub performance: f64,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub change: f64,
}

/// Upper end of the action grid, `10 (sum_i max_s tau_i(s) + 1)`.
pub fn action_bound(contract: &Contract) -> f64 {
    let total: f64 = (0..contract.n()).map(|i| contract.payments.row(i).iter().copied().fold(0.0, f64::max)).sum();
    10.0 * (total + 1.0)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizer of `f` on `[a, b]` by golden-section search.
fn golden_argmax(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + b.abs()) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        x1
    } else {
        x2
    }
}

/// Refine an interior maximizer by the vertex of the parabola through three
/// payoff values, trusted only within the sampling step.
fn parabolic_polish(f: &mut dyn FnMut(f64) -> f64, x: f64, lo: f64, hi: f64) -> f64 {
    let mut best = x;
    for scale in [1e-4, 1e-5] {
        let h = scale * (1.0 + best.abs());
        if best - h < lo || best + h > hi {
            break;
        }
        let (fl, fm, fr) = (f(best - h), f(best), f(best + h));
        let curvature = fl - 2.0 * fm + fr;
        if !(curvature < 0.0) {
            break;
        }
        let shift = 0.5 * h * (fl - fr) / curvature;
        if shift.abs() > h {
            break;
        }
        best += shift;
    }
    best
}

/// Agent `i`'s payoff-maximizing action against `a` by grid search over
/// `[0, a_max]`, golden-section refinement and a parabolic polish.
fn grid_best_response(problem: &Problem, contract: &Contract, a: &[f64], i: usize, a_max: f64) -> f64 {
    let mut probe = a.to_vec();
    let mut payoff = |x: f64| {
        probe[i] = x;
        problem.agent_payoff(contract, i, &probe)
    };
    let step = a_max / (ACTION_GRID - 1) as f64;
    let mut best_k = 0;
    let mut best_value = f64::NEG_INFINITY;
    for k in 0..ACTION_GRID {
        let v = payoff(k as f64 * step);
        if v > best_value {
            best_value = v;
            best_k = k;
        }
    }
    let lo = best_k.saturating_sub(1) as f64 * step;
    let hi = ((best_k + 1).min(ACTION_GRID - 1)) as f64 * step;
    let x = golden_argmax(&mut payoff, lo, hi);
    let x = if payoff(0.0) >= payoff(x) { 0.0 } else { x };
    if x == 0.0 {
        return 0.0;
    }
    parabolic_polish(&mut payoff, x, lo, hi)
}

/// Damped simultaneous best responses from zero effort until the sup-norm change
/// of a sweep falls below `tol`.
pub fn best_response_iterate(
    problem: &Problem,
    contract: &Contract,
    tol: f64,
    damping: f64,
) -> Result<OracleEquilibrium, OracleError> {
    let start = if problem.production.singular_at_zero() { 1.0 } else { 0.0 };
    best_response_iterate_from(problem, contract, &vec![start; problem.n], tol, damping, 10_000)
}

/// [`best_response_iterate`] from a given profile with a sweep limit.
pub fn best_response_iterate_from(
    problem: &Problem,
    contract: &Contract,
    init: &[f64],
    tol: f64,
    damping: f64,
    max_sweeps: usize,
) -> Result<OracleEquilibrium, OracleError> {
    let n = problem.n;
    if init.len() != n || contract.n() != n || contract.num_outcomes() != problem.num_outcomes() {
        return Err(OracleError::Input("dimensions of problem, contract and initial profile differ".into()));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(OracleError::Input(format!("damping {damping} outside (0, 1]")));
    }
    let a_max = action_bound(contract);
    let mut a = init.to_vec();
    let mut change = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let responses: Vec<f64> = (0..n).map(|i| grid_best_response(problem, contract, &a, i, a_max)).collect();
        change = 0.0;
        for i in 0..n {
            let next = (1.0 - damping) * a[i] + damping * responses[i];
            change = f64::max(change, (next - a[i]).abs());
            a[i] = next;
        }
        if change < tol {
            let performance = problem.production.value(&a);
            return Ok(OracleEquilibrium { actions: a, performance, iterations: sweep, change });
        }
    }
    Err(OracleError::NoConvergence { iterations: max_sweeps, change })
}

/// Best contract found on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub contract: Contract,
    pub payoff: f64,
    pub equilibrium: OracleEquilibrium,
    pub evaluated: usize,
}

/// Sup-norm change tolerance of the equilibria inside contract grid searches.
const GRID_EQUILIBRIUM_TOL: f64 = 1e-10;

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| lo + k as f64 * step).collect()
}

/// Exhaustive search of the principal's payoff over the Cartesian grid with
/// spacing `grid_resolution` inside `bounds`, one `(low, high)` pair per payment
/// in agent-major order. A pair with `low == high` fixes that payment. Ties go
/// to the lexicographically first grid point.
pub fn brute_force_optimal_contract(
    problem: &Problem,
    grid_resolution: f64,
    bounds: &[(f64, f64)],
) -> Result<GridOptimum, OracleError> {
    let m = problem.num_outcomes();
    if bounds.len() != problem.n * m {
        return Err(OracleError::Input(format!("need {} bounds, got {}", problem.n * m, bounds.len())));
    }
    if !(grid_resolution > 0.0) || bounds.iter().any(|&(lo, hi)| !(lo >= 0.0 && hi >= lo)) {
        return Err(OracleError::Input("grid step must be positive and bounds nonnegative and ordered".into()));
    }
    let dims = bounds.iter().filter(|(lo, hi)| hi > lo).count();
    if dims > MAX_GRID_DIMENSION {
        return Err(OracleError::Dimension { dims, max: MAX_GRID_DIMENSION });
    }
    let axes: Vec<Vec<f64>> = bounds.iter().map(|&(lo, hi)| axis(lo, hi, grid_resolution)).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let point = |mut index: usize| -> Vec<f64> {
        let mut x = vec![0.0; axes.len()];
        for d in (0..axes.len()).rev() {
            x[d] = axes[d][index % axes[d].len()];
            index /= axes[d].len();
        }
        x
    };
    let to_contract = |x: &[f64]| Contract::new(nalgebra::DMatrix::from_fn(problem.n, m, |i, s| x[i * m + s]));
    let evaluations: Vec<Option<(f64, OracleEquilibrium)>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let contract = to_contract(&point(idx));
            let eq = best_response_iterate(problem, &contract, GRID_EQUILIBRIUM_TOL, 1.0)
                .or_else(|_| best_response_iterate(problem, &contract, GRID_EQUILIBRIUM_TOL, 0.5))
                .ok()?;
            let payoff = problem.principal_payoff(&contract, eq.performance);
            payoff.is_finite().then_some((payoff, eq))
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (idx, e) in evaluations.iter().enumerate() {
        if let Some((v, _)) = e {
            if best.is_none_or(|(_, b)| *v > b) {
                best = Some((idx, *v));
            }
        }
    }
    let (idx, payoff) = best.ok_or_else(|| OracleError::Input("no grid point admits an equilibrium".into()))?;
    let equilibrium = evaluations[idx].as_ref().map(|(_, e)| e.clone()).expect("best point was evaluated");
    Ok(GridOptimum { contract: to_contract(&point(idx)), payoff, equilibrium, evaluated: total })
}

/// Nested grid search: the first resolution covers `bounds`; each later
/// resolution searches a window of one previous cell around the incumbent.
pub fn brute_force_refined(
    problem: &Problem,
    resolutions: &[f64],
    bounds: &[(f64, f64)],
) -> Result<GridOptimum, OracleError> {
    let (&first, rest) =
        resolutions.split_first().ok_or_else(|| OracleError::Input("need at least one resolution".into()))?;
    let mut best = brute_force_optimal_contract(problem, first, bounds)?;
    let mut previous = first;
    let mut evaluated = best.evaluated;
    for &step in rest {
        let centre: Vec<f64> = best.contract.payments.transpose().iter().copied().collect();
        let window: Vec<(f64, f64)> = bounds
            .iter()
            .zip(&centre)
            .map(|(&(lo, hi), &c)| {
                if hi <= lo {
                    (lo, hi)
                } else {
                    let low = (c - previous).max(lo);
                    let cells = ((c - low) / step).round();
                    let low = c - cells * step;
                    (low, (c + previous).min(hi))
                }
            })
            .collect();
        let candidate = brute_force_optimal_contract(problem, step, &window)?;
        evaluated += candidate.evaluated;
        if candidate.payoff >= best.payoff {
            best = candidate;
        }
        previous = step;
    }
    best.evaluated = evaluated;
    Ok(best)
}

/// Central difference `(f(x + h) - f(x - h)) / (2h)`.
pub fn finite_diff<E: std::fmt::Display>(
    f: impl Fn(f64) -> Result<f64, E>,
    x: f64,
    h: f64,
) -> Result<f64, OracleError> {
    let eval = |p: f64| f(p).map_err(|e| OracleError::Evaluation { point: p, message: e.to_string() });
    Ok((eval(x + h)? - eval(x - h)?) / (2.0 * h))
}

/// Richardson extrapolation of central differences with steps `h` and `h/2`.
pub fn finite_diff_richardson<E: std::fmt::Display>(
    f: impl Fn(f64) -> Result<f64, E>,
    x: f64,
    h: f64,
) -> Result<f64, OracleError> {
    let coarse = finite_diff(&f, x, h)?;
    let fine = finite_diff(&f, x, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}
