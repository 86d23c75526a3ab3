//! Multi-start spectral projected-gradient ascent on the principal's payoff.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{finish, payoff_gradient, Method, OptimalContractResult, OptimizerOptions};
use crate::diagnostics::compute_balance_report;
use crate::equilibrium::{solve_equilibrium_general_with, EquilibriumResult};
use crate::error::{ensure_valid, Error, Result};
use crate::model::{Contract, Problem};

/// A family of contracts indexed by a point of a convex set in `R^dim`.
pub(crate) trait Parametrization: Sync {
    fn dim(&self) -> usize;
    fn contract(&self, x: &[f64]) -> Contract;
    /// Gradient in `x` from the payoff gradient in payments.
    fn pullback(&self, grad: &DMatrix<f64>) -> Vec<f64>;
    /// Euclidean projection onto the feasible set.
    fn project(&self, x: &mut [f64]);
    /// Deterministic starting points.
    fn starts(&self, count: usize) -> Vec<Vec<f64>>;
}

/// Every payment is a free nonnegative coordinate, stored agent-major.
pub(crate) struct FullContract {
    pub n: usize,
    pub outcomes: usize,
    pub revenues: Vec<f64>,
}

impl Parametrization for FullContract {
    fn dim(&self) -> usize {
        self.n * self.outcomes
    }

    fn contract(&self, x: &[f64]) -> Contract {
        Contract::new(DMatrix::from_fn(self.n, self.outcomes, |i, s| x[i * self.outcomes + s]))
    }

    fn pullback(&self, grad: &DMatrix<f64>) -> Vec<f64> {
        (0..self.dim()).map(|k| grad[(k / self.outcomes, k % self.outcomes)]).collect()
    }

    fn project(&self, x: &mut [f64]) {
        for v in x {
            *v = v.max(0.0);
        }
    }

    /// A uniform contract paying a quarter of each outcome's revenue, split
    /// evenly, followed by the same contract tilted toward one canonical
    /// coordinate after another.
    fn starts(&self, count: usize) -> Vec<Vec<f64>> {
        let base: Vec<f64> = (0..self.dim())
            .map(|k| {
                let v = self.revenues[k % self.outcomes];
                0.25 * v / self.n as f64
            })
            .collect();
        let top = self.revenues.iter().copied().fold(0.0, f64::max);
        let bump = 0.5 * top / self.n as f64;
        (0..count)
            .map(|j| {
                let mut x = base.clone();
                if j > 0 {
                    let k = (j - 1) % self.dim();
                    for v in x.iter_mut() {
                        *v *= 0.5;
                    }
                    x[k] += bump * (1.0 + ((j - 1) / self.dim()) as f64) / 2.0;
                }
                x
            })
            .collect()
    }
}

/// A contract with its equilibrium and payoff gradient.
pub(crate) struct Evaluation {
    pub x: Vec<f64>,
    pub contract: Contract,
    pub equilibrium: EquilibriumResult,
    pub payoff: f64,
    pub grad: Vec<f64>,
}

fn initial_actions(problem: &Problem, warm: Option<&[f64]>) -> Vec<f64> {
    let floor = if problem.production.singular_at_zero() { 1e-3 } else { 0.0 };
    match warm {
        Some(a) => a.iter().map(|&v| v.max(floor)).collect(),
        None => vec![if floor > 0.0 { 1.0 } else { 0.0 }; problem.n],
    }
}

pub(crate) fn evaluate(
    problem: &Problem,
    param: &dyn Parametrization,
    x: &[f64],
    warm: Option<&[f64]>,
    opts: &OptimizerOptions,
) -> Result<Evaluation> {
    let contract = param.contract(x);
    let init = initial_actions(problem, warm);
    let equilibrium = solve_equilibrium_general_with(problem, &contract, &init, &opts.equilibrium)?;
    let payoff = problem.principal_payoff(&contract, equilibrium.performance);
    let report = compute_balance_report(problem, &contract, &equilibrium)?;
    let grad = param.pullback(&payoff_gradient(&report));
    if grad.iter().any(|g| g.is_nan()) || !payoff.is_finite() {
        return Err(Error::NonConvergence { iterations: 0, residual: f64::NAN });
    }
    Ok(Evaluation { x: x.to_vec(), contract, equilibrium, payoff, grad })
}

/// `max_k |proj(x + g)_k - x_k|`.
pub(crate) fn projected_gradient_norm(param: &dyn Parametrization, x: &[f64], g: &[f64]) -> f64 {
    let mut y: Vec<f64> = x.iter().zip(g).map(|(x, g)| x + g).collect();
    param.project(&mut y);
    y.iter().zip(x).map(|(y, x)| (y - x).abs()).fold(0.0, f64::max)
}

/// Gradient entries of `-inf` belong to payments pinned at zero; replace them
/// with a large finite pull so projections and step lengths stay finite.
fn finite_gradient(g: &[f64]) -> Vec<f64> {
    g.iter().map(|&v| if v == f64::NEG_INFINITY { -1e12 } else { v }).collect()
}

/// Move zero coordinates whose gradient is `+inf` to a small positive payment
/// and re-evaluate, until the gradient is finite.
fn lift_inada(
    problem: &Problem,
    param: &dyn Parametrization,
    mut eval: Evaluation,
    opts: &OptimizerOptions,
) -> Result<Evaluation> {
    for _ in 0..param.dim() + 1 {
        if !eval.grad.contains(&f64::INFINITY) {
            return Ok(eval);
        }
        let mut x = eval.x.clone();
        for (v, &g) in x.iter_mut().zip(&eval.grad) {
            if g == f64::INFINITY {
                *v = v.max(opts.inada_floor);
            }
        }
        param.project(&mut x);
        eval = evaluate(problem, param, &x, Some(eval.equilibrium.actions.as_slice()), opts)?;
    }
    Err(Error::NonConvergence { iterations: 0, residual: f64::INFINITY })
}

pub(crate) struct Ascent {
    pub eval: Evaluation,
    pub kkt: f64,
    pub converged: bool,
}

/// Spectral projected-gradient ascent with Armijo backtracking from `x0`.
pub(crate) fn ascend(
    problem: &Problem,
    param: &dyn Parametrization,
    x0: &[f64],
    opts: &OptimizerOptions,
) -> Result<Ascent> {
    let mut x0 = x0.to_vec();
    param.project(&mut x0);
    let mut cur = lift_inada(problem, param, evaluate(problem, param, &x0, None, opts)?, opts)?;
    let mut g = finite_gradient(&cur.grad);
    let gmax = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut alpha = 1.0 / gmax.max(1.0);
    for _ in 0..opts.max_iterations {
        let kkt = projected_gradient_norm(param, &cur.x, &g);
        if kkt <= opts.tol {
            return Ok(Ascent { eval: cur, kkt, converged: true });
        }
        let mut target: Vec<f64> = cur.x.iter().zip(&g).map(|(x, g)| x + alpha * g).collect();
        param.project(&mut target);
        let dir: Vec<f64> = target.iter().zip(&cur.x).map(|(t, x)| t - x).collect();
        let slope: f64 = dir.iter().zip(&g).filter(|(d, _)| **d != 0.0).map(|(d, g)| d * g).sum();
        let noise = 1e-14 * (1.0 + cur.payoff.abs());
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = cur.x.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            param.project(&mut trial);
            if let Ok(e) = evaluate(problem, param, &trial, Some(cur.equilibrium.actions.as_slice()), opts) {
                if e.payoff >= cur.payoff + 1e-4 * t * slope - noise {
                    next = Some(e);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(next) = next else {
            return Ok(Ascent { eval: cur, kkt, converged: false });
        };
        let next = lift_inada(problem, param, next, opts)?;
        let g_next = finite_gradient(&next.grad);
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..cur.x.len() {
            let s = next.x[k] - cur.x[k];
            if s != 0.0 {
                ss += s * s;
                sy += s * (g_next[k] - g[k]);
            }
        }
        alpha = if sy < 0.0 { (ss / -sy).clamp(1e-10, 1e10) } else { 1e3 * alpha.max(1e-6) }.min(1e10);
        cur = next;
        g = g_next;
    }
    let kkt = projected_gradient_norm(param, &cur.x, &g);
    Ok(Ascent { converged: kkt <= opts.tol, eval: cur, kkt })
}

/// Run every start and keep the best converged result (payoff, then
/// lexicographically smallest contract). Errors carry the best iterate when no
/// start converged.
pub(crate) fn multi_start(
    problem: &Problem,
    param: &dyn Parametrization,
    opts: &OptimizerOptions,
    method: Method,
) -> Result<OptimalContractResult> {
    ensure_valid(problem)?;
    let starts = param.starts(opts.starts.max(1));
    let runs: Vec<Result<Ascent>> = starts.par_iter().map(|x0| ascend(problem, param, x0, opts)).collect();
    let mut best: Option<&Ascent> = None;
    let mut best_any: Option<&Ascent> = None;
    let mut first_error = None;
    for run in &runs {
        match run {
            Ok(a) => {
                if a.converged && better(a, best) {
                    best = Some(a);
                }
                if better(a, best_any) {
                    best_any = Some(a);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let package = |a: &Ascent| {
        let mut result = finish(problem, a.eval.contract.clone(), a.eval.equilibrium.clone(), method, Vec::new());
        result.kkt_residual = a.kkt;
        result
    };
    match (best, best_any) {
        (Some(a), _) => Ok(package(a)),
        (None, Some(a)) => Err(Error::OptimizerFailed { best: Box::new(package(a)) }),
        (None, None) => Err(match first_error {
            Some(Error::NoEquilibrium(m)) => Error::NoEquilibrium(m.clone()),
            Some(e) => Error::Precondition(format!("every start failed; first failure: {e}")),
            None => Error::Precondition("no starting contract".into()),
        }),
    }
}

fn better(a: &Ascent, incumbent: Option<&Ascent>) -> bool {
    let Some(b) = incumbent else { return true };
    let tie = 1e-12 * (1.0 + b.eval.payoff.abs());
    if a.eval.payoff > b.eval.payoff + tie {
        return true;
    }
    if a.eval.payoff < b.eval.payoff - tie {
        return false;
    }
    a.eval.x.iter().zip(&b.eval.x).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less)
}

/// Optimal contract of a general environment by multi-start projected-gradient
/// ascent with the analytic payoff gradient.
pub fn optimize_general(problem: &Problem, opts: &OptimizerOptions) -> Result<OptimalContractResult> {
    let param = FullContract { n: problem.n, outcomes: problem.num_outcomes(), revenues: problem.outcomes.revenues() };
    multi_start(problem, &param, opts, Method::General)
}
