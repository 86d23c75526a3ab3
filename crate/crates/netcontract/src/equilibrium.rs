//! Nash equilibrium effort under a fixed contract.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_valid, Error, Result};
use crate::model::{serde_matrix, Contract, ModelError, Network, Problem, SuccessProbability};
use crate::numeric;

/// Equilibrium action profile and convergence metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    #[serde(with = "serde_matrix::vector")]
    pub actions: DVector<f64>,
    pub performance: f64,
    pub probs: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// `1 - P'(Y*) rho(T G)`; only set by the quadratic-binary solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_margin: Option<f64>,
    /// Outcome of the coarse grid check that every action is a global best response;
    /// only set by the general solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_check_passed: Option<bool>,
}

/// Settings of the general best-response solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    /// Largest admissible first-order-condition violation.
    pub tol: f64,
    pub max_sweeps: usize,
    pub damping: f64,
    /// Grid points per agent for the global best-response check.
    pub check_points: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_sweeps: 10_000, damping: 0.5, check_points: 64 }
    }
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    numeric::spectral_radius(m)
}

fn quadratic_value(g: &DMatrix<f64>, b: &[f64], a: &DVector<f64>) -> f64 {
    let linear: f64 = b.iter().zip(a.iter()).map(|(b, a)| b * a).sum();
    linear + 0.5 * a.dot(&(g * a))
}

/// Unique equilibrium of the quadratic-network, success-or-failure game with
/// risk-neutral agents and unit quadratic costs.
///
/// For a candidate performance level `y` the first-order conditions are linear,
/// `a(y) = [I - P'(y) T G]^{-1} P'(y) T b`; the equilibrium is the unique `y`
/// with `Y(a(y)) = y` among levels where `P'(y) rho(T G) < 1`.
pub fn solve_equilibrium_quadratic_binary(
    network: &Network,
    standalone: &[f64],
    tau: &[f64],
    p: &SuccessProbability,
) -> Result<EquilibriumResult> {
    let n = network.n();
    if tau.len() != n || standalone.len() != n {
        return Err(ModelError::Dimension(format!("expected {n} payments and standalone coefficients")).into());
    }
    if let Some(&t) = tau.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(ModelError::Negative { what: "payment", value: t }.into());
    }
    if !p.concave_on_nonnegative() {
        return Err(Error::Precondition("success probability must be concave on Y >= 0".into()));
    }
    let g = network.effective();
    let probs_at = |y: f64| {
        let pv = p.value(y);
        vec![1.0 - pv, pv]
    };
    if tau.iter().all(|&t| t == 0.0) {
        return Ok(EquilibriumResult {
            actions: DVector::zeros(n),
            performance: 0.0,
            probs: probs_at(0.0),
            iterations: 0,
            residual: 0.0,
            spectral_margin: Some(1.0),
            global_check_passed: None,
        });
    }
    let t_mat = DMatrix::from_diagonal(&DVector::from_column_slice(tau));
    let tg = &t_mat * &g;
    let rho = spectral_radius(&tg);
    let tb = DVector::from_fn(n, |i, _| tau[i] * standalone[i]);
    let identity = DMatrix::<f64>::identity(n, n);
    let actions_at = |slope: f64| -> Option<DVector<f64>> {
        numeric::solve(&(&identity - &tg * slope), &(&tb * slope))
    };

    let (actions, iterations) = if let SuccessProbability::LinearCapped { slope } = *p {
        if slope * rho >= 1.0 {
            return Err(Error::NoEquilibrium(format!(
                "P' rho(TG) = {} >= 1: complementarities too strong for this contract",
                slope * rho
            )));
        }
        let a = actions_at(slope).ok_or_else(|| Error::Singular { context: "I - P'TG".into(), spectral_radius: Some(rho) })?;
        (a, 1)
    } else {
        let slope_at = |y: f64| p.derivs_unchecked(y).1;
        let lo = if slope_at(0.0) * rho < 1.0 {
            0.0
        } else {
            let mut hi = 1.0;
            while slope_at(hi) * rho >= 1.0 {
                hi *= 2.0;
                if hi > 1e15 {
                    return Err(Error::NoEquilibrium("P'(y) rho(TG) >= 1 for every y".into()));
                }
            }
            let y0 = numeric::bisect(|y| 1.0 - slope_at(y) * rho, 0.0, hi);
            let mut lo = y0 * (1.0 + 1e-12) + 1e-300;
            while slope_at(lo) * rho >= 1.0 {
                lo = lo * (1.0 + 1e-9) + 1e-300;
            }
            lo
        };
        let excess = |y: f64| -> f64 {
            match actions_at(slope_at(y)) {
                Some(a) => quadratic_value(&g, standalone, &a) - y,
                None => f64::INFINITY,
            }
        };
        let mut hi = (2.0 * lo).max(1.0);
        while excess(hi) >= 0.0 {
            hi *= 2.0;
            if hi > 1e15 {
                return Err(Error::NoEquilibrium("Y(a(y)) > y on the whole admissible range".into()));
            }
        }
        let mut count = 0;
        let y = numeric::bisect(
            |y| {
                count += 1;
                excess(y)
            },
            lo,
            hi,
        );
        let a = actions_at(slope_at(y))
            .ok_or_else(|| Error::Singular { context: "I - P'TG".into(), spectral_radius: Some(rho) })?;
        (a, count)
    };

    let performance = quadratic_value(&g, standalone, &actions);
    let (_, slope, _) = p.derivs(performance)?;
    let marginal = &g * &actions;
    let residual = (0..n)
        .map(|i| (actions[i] - slope * tau[i] * (standalone[i] + marginal[i])).abs())
        .fold(0.0, f64::max);
    let margin = 1.0 - slope * rho;
    if margin <= 0.0 {
        return Err(Error::NoEquilibrium(format!("spectral condition fails at the fixed point (margin {margin})")));
    }
    Ok(EquilibriumResult {
        actions,
        performance,
        probs: probs_at(performance),
        iterations,
        residual,
        spectral_margin: Some(margin),
        global_check_passed: None,
    })
}

/// Effort game induced by a contract, with payment utilities precomputed.
pub(crate) struct Game<'a> {
    pub problem: &'a Problem,
    /// `u_i(tau_i(s))`.
    pub pay_utility: DMatrix<f64>,
}

impl<'a> Game<'a> {
    pub fn new(problem: &'a Problem, contract: &Contract) -> Self {
        let pay_utility = DMatrix::from_fn(problem.n, problem.num_outcomes(), |i, s| {
            problem.utilities[i].value(contract.payments[(i, s)])
        });
        Self { problem, pay_utility }
    }

    fn paid(&self, i: usize) -> bool {
        self.pay_utility.row(i).iter().any(|&w| w != 0.0)
    }

    /// `U_i(Y) = sum_s P'_s(Y) u_i(tau_i(s))` and its derivative in `Y`.
    fn incentive(&self, i: usize, y: f64) -> (f64, f64) {
        let probs = self.problem.outcomes.probs_unchecked(y);
        let row = self.pay_utility.row(i);
        let u: f64 = probs.dp.iter().zip(row.iter()).map(|(d, w)| d * w).sum();
        let du: f64 = probs.d2p.iter().zip(row.iter()).map(|(d, w)| d * w).sum();
        (u, du)
    }

    /// Agent `i`'s marginal payoff `U_i(Y) dY/da_i - C_i'(a_i)` and its derivative in `a_i`.
    fn marginal_payoff(&self, i: usize, a: &[f64]) -> (f64, f64) {
        let prod = &self.problem.production;
        let cost = &self.problem.costs[i];
        let y = prod.value(a);
        let (u, du) = self.incentive(i, y);
        let dy = prod.partial(i, a);
        let d2y = prod.second_partial(i, i, a);
        let value = if u == 0.0 { 0.0 } else { u * dy } - cost.marginal(a[i]);
        let slope = du * dy * dy + if u == 0.0 { 0.0 } else { u * d2y } - cost.curvature(a[i]);
        let value = if value.is_nan() { 0.0 } else { value };
        (value, slope)
    }

    /// First-order (Kuhn-Tucker) violation of agent `i` at `a`.
    fn foc_violation(&self, i: usize, a: &[f64]) -> f64 {
        let (g, _) = self.marginal_payoff(i, a);
        if a[i] > 0.0 {
            g.abs()
        } else {
            let mut probe = a.to_vec();
            probe[i] = self.floor();
            self.marginal_payoff(i, &probe).0.max(0.0)
        }
    }

    fn floor(&self) -> f64 {
        if self.problem.production.singular_at_zero() {
            1e-300
        } else {
            0.0
        }
    }

    pub fn residual(&self, a: &[f64]) -> f64 {
        (0..a.len()).map(|i| self.foc_violation(i, a)).fold(0.0, f64::max)
    }

    /// Best response of agent `i` from its first-order condition: safeguarded
    /// Newton with bisection fallback on a bracket where the marginal payoff
    /// changes sign. Returns zero when moving up from zero does not pay.
    fn best_response(&self, i: usize, a: &[f64]) -> Result<f64> {
        if !self.paid(i) {
            return Ok(0.0);
        }
        let mut probe = a.to_vec();
        let mut g = |x: f64| {
            probe[i] = x;
            self.marginal_payoff(i, &probe)
        };
        let floor = self.floor();
        if g(floor.max(1e-14 * a[i])).0 <= 0.0 && g(floor).0 <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = (2.0 * a[i]).max(1.0);
        while g(hi).0 > 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::NonConvergence { iterations: 0, residual: f64::INFINITY });
            }
        }
        let mut lo = floor;
        let mut x = if a[i] > lo && a[i] < hi { a[i] } else { 0.5 * (lo + hi) };
        for _ in 0..200 {
            let (gx, dgx) = g(x);
            if gx == 0.0 {
                return Ok(x);
            }
            if gx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - gx / dgx;
            let next = if dgx < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// Newton steps on the first-order conditions of the agents in `active`,
    /// holding the others at zero. Returns the improved profile if the residual fell.
    fn newton_polish(&self, a: &DVector<f64>, active: &[usize]) -> Option<DVector<f64>> {
        let prod = &self.problem.production;
        let mut x = a.clone();
        for i in 0..x.len() {
            if !active.contains(&i) {
                x[i] = 0.0;
            }
        }
        let mut best = self.residual(x.as_slice());
        let mut improved = false;
        for _ in 0..30 {
            let y = prod.value(x.as_slice());
            let grad = prod.gradient(x.as_slice());
            let hess = prod.hessian(x.as_slice());
            let k = active.len();
            let mut jac = DMatrix::zeros(k, k);
            let mut f = DVector::zeros(k);
            for (r, &i) in active.iter().enumerate() {
                let (u, du) = self.incentive(i, y);
                f[r] = u * grad[i] - self.problem.costs[i].marginal(x[i]);
                for (c, &j) in active.iter().enumerate() {
                    jac[(r, c)] = du * grad[i] * grad[j] + u * hess[(i, j)];
                }
                jac[(r, r)] -= self.problem.costs[i].curvature(x[i]);
            }
            let step = numeric::solve(&jac, &(-f))?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..20 {
                let mut trial = x.clone();
                for (r, &i) in active.iter().enumerate() {
                    trial[i] = (x[i] + t * step[r]).max(0.0);
                }
                let res = self.residual(trial.as_slice());
                if res < best {
                    best = res;
                    x = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            improved = true;
            if best == 0.0 {
                break;
            }
        }
        improved.then_some(x)
    }

    /// Whether each agent's action beats every point of a coarse action grid.
    pub fn global_check(&self, contract: &Contract, a: &[f64], points: usize) -> bool {
        let total_pay: f64 = (0..a.len()).map(|i| contract.max_payment(i)).sum();
        let a_max = 10.0 * (total_pay + 1.0);
        let mut probe = a.to_vec();
        (0..a.len()).all(|i| {
            probe.copy_from_slice(a);
            let here = self.problem.agent_payoff(contract, i, &probe);
            let tol = 1e-9 * (1.0 + here.abs());
            (0..points).all(|k| {
                probe[i] = a_max * k as f64 / (points - 1) as f64;
                self.problem.agent_payoff(contract, i, &probe) <= here + tol
            })
        })
    }
}

/// Equilibrium of a general environment by damped simultaneous best responses
/// started at `init`, finished with Newton steps on the first-order conditions.
pub fn solve_equilibrium_general(problem: &Problem, contract: &Contract, init: &[f64]) -> Result<EquilibriumResult> {
    solve_equilibrium_general_with(problem, contract, init, &EquilibriumOptions::default())
}

/// [`solve_equilibrium_general`] with explicit options.
pub fn solve_equilibrium_general_with(
    problem: &Problem,
    contract: &Contract,
    init: &[f64],
    opts: &EquilibriumOptions,
) -> Result<EquilibriumResult> {
    ensure_valid(problem)?;
    contract.check(problem)?;
    let n = problem.n;
    if init.len() != n {
        return Err(ModelError::Dimension(format!("initial profile has {} entries for {n} agents", init.len())).into());
    }
    if let Some(&x) = init.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(ModelError::Negative { what: "initial action", value: x }.into());
    }
    let game = Game::new(problem, contract);
    let total_pay: f64 = (0..n).map(|i| contract.max_payment(i)).sum();
    let blow_up = 1e8 * 10.0 * (total_pay + 1.0);
    let mut a = DVector::from_column_slice(init);
    let mut residual = game.residual(a.as_slice());
    let mut iterations = 0;
    let mut polish_at = 1e-4;
    while residual > opts.tol {
        if iterations >= opts.max_sweeps {
            return Err(Error::NonConvergence { iterations, residual });
        }
        iterations += 1;
        let responses = (0..n).map(|i| game.best_response(i, a.as_slice())).collect::<Result<Vec<f64>>>()?;
        for i in 0..n {
            let next = (1.0 - opts.damping) * a[i] + opts.damping * responses[i];
            a[i] = if responses[i] == 0.0 && next < 1e-14 { 0.0 } else { next };
        }
        if a.iter().any(|&x| x > blow_up || !x.is_finite()) {
            return Err(Error::NoEquilibrium(format!("best-response dynamics diverge after {iterations} sweeps")));
        }
        residual = game.residual(a.as_slice());
        if residual > opts.tol && residual < polish_at {
            let active: Vec<usize> = (0..n).filter(|&i| responses[i] > 0.0).collect();
            if let Some(polished) = game.newton_polish(&a, &active) {
                a = polished;
                residual = game.residual(a.as_slice());
            }
            polish_at = residual.min(polish_at) * 0.1;
        }
    }
    let performance = problem.production.value(a.as_slice());
    problem.outcomes.probs(performance)?;
    let global_check_passed = Some(game.global_check(contract, a.as_slice(), opts.check_points));
    Ok(EquilibriumResult {
        probs: problem.outcomes.prob_values(performance),
        actions: a,
        performance,
        iterations,
        residual,
        spectral_margin: None,
        global_check_passed,
    })
}
