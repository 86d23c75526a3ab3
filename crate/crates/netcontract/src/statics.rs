//! Comparative statics of optimal contracts in the quadratic network
//! environment with a binary outcome, and parameter sweeps.
//!
//! Link derivatives are taken with respect to the effective weight of an
//! undirected link, so `G_jk` and `G_kj` move together.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract_opt::{optimize_quadratic_binary, OptimalContractResult, OptimizerOptions};
use crate::error::{Error, Result};
use crate::model::{Network, Problem, SuccessProbability};
use crate::numeric;

/// `d tau_i* / d G_jk` for active agents `i, j, k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareDerivatives {
    pub active: Vec<usize>,
    /// `entries[a][b][c]` is the derivative of the payment of `active[a]` with
    /// respect to the link between `active[b]` and `active[c]` (zero for `b == c`).
    pub entries: Vec<Vec<Vec<f64>>>,
    /// Whether the response of the optimal total share is included; it is only
    /// available for a linear success probability.
    pub share_response_included: bool,
}

impl ShareDerivatives {
    /// Derivative of agent `i`'s payment with respect to link `(j, k)`, if all are active.
    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let pos = |x: usize| self.active.iter().position(|&a| a == x);
        Some(self.entries[pos(i)?][pos(j)?][pos(k)?])
    }
}

struct BalancedOptimum {
    active: Vec<usize>,
    tau: Vec<f64>,
    /// `G~^{-1}` over the active agents.
    inverse: DMatrix<f64>,
    /// `G~^{-1} 1`.
    direction: DVector<f64>,
    total_share: f64,
    lambda: f64,
}

fn balanced_optimum(network: &Network, opt: &OptimalContractResult) -> Result<BalancedOptimum> {
    let n = network.n();
    if opt.contract.n() != n || opt.contract.num_outcomes() != 2 {
        return Err(Error::Precondition("expected a success-or-failure contract for this network".into()));
    }
    let tau_all = opt.contract.outcome_column(1);
    let active = opt.active_set.clone();
    if active.is_empty() {
        return Err(Error::Precondition("the contract pays nobody".into()));
    }
    let g = network.submatrix(&active);
    let inverse = g.clone().try_inverse().ok_or_else(|| Error::Singular {
        context: "G~ on the active set".into(),
        spectral_radius: Some(numeric::spectral_radius(&g)),
    })?;
    let direction = &inverse * DVector::from_element(active.len(), 1.0);
    let tau: Vec<f64> = active.iter().map(|&i| tau_all[i]).collect();
    let total_share: f64 = tau.iter().sum();
    let k = direction.sum();
    Ok(BalancedOptimum { active, tau, inverse, direction, total_share, lambda: total_share / k })
}

/// Closed-form derivatives of the optimal payments with respect to link weights
/// among active agents, at an optimal balanced contract.
///
/// Under a linear success probability the total share re-optimizes along the
/// root of the share polynomial; otherwise it is held fixed.
pub fn dshare_dlink(network: &Network, p: &SuccessProbability, opt: &OptimalContractResult) -> Result<ShareDerivatives> {
    let b = balanced_optimum(network, opt)?;
    let m = b.active.len();
    let k = b.direction.sum();
    let s = b.total_share;
    let share_slope = match *p {
        SuccessProbability::LinearCapped { slope } => {
            let p_k = 3.0 * slope * s * s - 8.0 * k * s + 4.0 * k;
            let p_s = -3.0 * slope * slope * s * s + 6.0 * slope * k * s - 4.0 * k * k;
            Some(-p_k / p_s)
        }
        _ => None,
    };
    let mut entries = vec![vec![vec![0.0; m]; m]; m];
    for j in 0..m {
        for kk in 0..m {
            if j == kk {
                continue;
            }
            let dk = -2.0 * b.direction[j] * b.direction[kk];
            let ds = share_slope.map_or(0.0, |slope| slope * dk);
            let dlambda = ds / k - s * dk / (k * k);
            for (i, row) in entries.iter_mut().enumerate() {
                row[j][kk] = -b.inverse[(i, kk)] * b.tau[j] - b.inverse[(i, j)] * b.tau[kk] + dlambda * b.tau[i] / b.lambda;
            }
        }
    }
    Ok(ShareDerivatives { active: b.active, entries, share_response_included: share_slope.is_some() })
}

/// `dY*/dG_ij = tau_i* tau_j* h` at a balanced optimal contract held fixed, with
/// `h = P'^2 (2/q^3 + 1/q^2) / (1 - P'' sum(tau)/q^3)` and `q = 1 - lambda P'(Y*)`.
pub fn dperformance_dlink(
    network: &Network,
    p: &SuccessProbability,
    opt: &OptimalContractResult,
) -> Result<DMatrix<f64>> {
    let n = network.n();
    let b = balanced_optimum(network, opt)?;
    let (_, dp, d2p) = p.derivs(opt.equilibrium.performance)?;
    let q = 1.0 - b.lambda * dp;
    let h = dp * dp * (2.0 / q.powi(3) + 1.0 / (q * q)) / (1.0 - d2p * b.total_share / q.powi(3));
    let tau = opt.contract.outcome_column(1);
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { tau[i] * tau[j] * h }))
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Weight of the undirected link between two agents (0-based).
    Link(usize, usize),
    /// Common scale of all links.
    Beta,
}

impl FromStr for SweepParameter {
    type Err = Error;

    /// `beta`, `G<i><j>` with single-digit 1-based indices, or `G<i>,<j>`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::Precondition(format!("unknown sweep parameter {text:?}; use beta, G<i><j> or G<i>,<j>"));
        if text == "beta" {
            return Ok(Self::Beta);
        }
        let rest = text.strip_prefix('G').ok_or_else(bad)?;
        let (i, j) = match rest.split_once(',') {
            Some((i, j)) => (i.parse::<usize>().map_err(|_| bad())?, j.parse::<usize>().map_err(|_| bad())?),
            None if rest.len() == 2 && rest.bytes().all(|c| c.is_ascii_digit()) => {
                ((rest.as_bytes()[0] - b'0') as usize, (rest.as_bytes()[1] - b'0') as usize)
            }
            None => return Err(bad()),
        };
        if i == 0 || j == 0 || i == j {
            return Err(bad());
        }
        Ok(Self::Link(i - 1, j - 1))
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Beta => write!(f, "beta"),
            Self::Link(i, j) if *i < 9 && *j < 9 => write!(f, "G{}{}", i + 1, j + 1),
            Self::Link(i, j) => write!(f, "G{},{}", i + 1, j + 1),
        }
    }
}

impl SweepParameter {
    /// The network with this parameter set to `value`.
    pub fn apply(&self, network: &Network, value: f64) -> Result<Network> {
        match *self {
            Self::Beta => Ok(network.with_beta(value)),
            Self::Link(i, j) => {
                if i.max(j) >= network.n() {
                    return Err(Error::Precondition(format!("link {self} outside a network of {} agents", network.n())));
                }
                Ok(network.with_link(i, j, value))
            }
        }
    }
}

/// Inclusive grid `start:stop:step` with `start + k step` points.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Precondition(format!("grid {text:?} must be start:stop:step with step > 0 and stop >= start"));
    let parts: Vec<f64> = text.split(':').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + k as f64 * step).collect())
}

/// Outcome of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// Success payments.
    pub payments: Vec<f64>,
    pub principal_payoff: f64,
    /// `P(Y*) tau_i - a_i^2 / 2`.
    pub agent_payoffs: Vec<f64>,
    pub performance: f64,
    pub active_set: Vec<usize>,
    /// Error message when the point failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepPoint {
    /// Active set with bit `i` set for agent `i`.
    pub fn active_mask(&self) -> u64 {
        self.active_set.iter().fold(0, |m, &i| m | (1 << i))
    }
}

/// Optimal contracts along a one-parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl SweepCurve {
    /// Write one CSV row per grid point with columns `parameter, tau_1..tau_n,
    /// principal_payoff, payoff_1..payoff_n, Y, active_set, status`. Failed points
    /// leave numeric cells empty and carry the error in `status`.
    pub fn write_csv<W: Write>(&self, n: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Precondition(format!("writing CSV failed: {e}"));
        let mut header = vec![self.parameter.clone()];
        header.extend((1..=n).map(|i| format!("tau_{i}")));
        header.push("principal_payoff".into());
        header.extend((1..=n).map(|i| format!("payoff_{i}")));
        header.extend(["Y".to_string(), "active_set".to_string(), "status".to_string()]);
        w.write_record(&header).map_err(io)?;
        for pt in &self.points {
            let mut row = vec![fmt_float(pt.value)];
            match &pt.error {
                None => {
                    row.extend(pt.payments.iter().map(|&x| fmt_float(x)));
                    row.push(fmt_float(pt.principal_payoff));
                    row.extend(pt.agent_payoffs.iter().map(|&x| fmt_float(x)));
                    row.push(fmt_float(pt.performance));
                    row.push(pt.active_mask().to_string());
                    row.push("ok".into());
                }
                Some(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 2 * n + 3));
                    row.push(e.clone());
                }
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Precondition(format!("writing CSV failed: {e}")))
    }

    /// The CSV as a string.
    pub fn to_csv(&self, n: usize) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(n, &mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Precondition(e.to_string()))
    }
}

fn sweep_point(network: &Network, p: &SuccessProbability, opts: &OptimizerOptions, value: f64) -> SweepPoint {
    let n = network.n();
    let failed = |e: String| SweepPoint {
        value,
        payments: vec![f64::NAN; n],
        principal_payoff: f64::NAN,
        agent_payoffs: vec![f64::NAN; n],
        performance: f64::NAN,
        active_set: Vec::new(),
        error: Some(e),
    };
    match optimize_quadratic_binary(network, p, opts) {
        Ok(opt) => {
            let payments = opt.contract.outcome_column(1);
            let prob = p.value(opt.equilibrium.performance);
            let agent_payoffs =
                (0..n).map(|i| prob * payments[i] - 0.5 * opt.equilibrium.actions[i].powi(2)).collect();
            SweepPoint {
                value,
                payments,
                principal_payoff: opt.principal_payoff,
                agent_payoffs,
                performance: opt.equilibrium.performance,
                active_set: opt.active_set,
                error: None,
            }
        }
        Err(e) => failed(e.to_string()),
    }
}

/// Re-optimize the quadratic-binary `problem` at every grid value of `parameter`.
/// Failed points are recorded and the sweep continues. `jobs` bounds the worker
/// threads (`0` uses the default pool); results do not depend on it.
pub fn sweep(
    problem: &Problem,
    parameter: SweepParameter,
    grid: &[f64],
    opts: &OptimizerOptions,
    jobs: usize,
) -> Result<SweepCurve> {
    let qb = problem
        .as_quadratic_binary()
        .ok_or_else(|| Error::Precondition("sweeps need a quadratic network problem with a binary outcome".into()))?;
    if qb.standalone.iter().any(|&b| b != 1.0) {
        return Err(Error::Precondition("sweeps need unit standalone coefficients".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("sweep grid must be strictly increasing".into()));
    }
    let networks = grid.iter().map(|&v| parameter.apply(&qb.network, v)).collect::<Result<Vec<_>>>()?;
    let run = || -> Vec<SweepPoint> {
        networks.par_iter().zip(grid.par_iter()).map(|(net, &v)| sweep_point(net, &qb.success, opts, v)).collect()
    };
    let points = if jobs == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Precondition(format!("cannot start {jobs} worker threads: {e}")))?
            .install(run)
    };
    Ok(SweepCurve { parameter: parameter.to_string(), grid: grid.to_vec(), points })
}
