//! Optimal active sets of the quadratic network environment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Network, SuccessProbability};
use crate::numeric;

/// Hard limit of the subset bitmasks.
const MAX_ENUMERATION: usize = 30;

/// A candidate set of paid agents with its balanced-equity solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetCandidate {
    /// Agents in increasing order.
    pub members: Vec<usize>,
    /// Balance constant per unit of total share, `lambda / s = 1 / (1^T G~^{-1} 1)`.
    pub lambda_per_share: f64,
    /// Payment shares `G~^{-1} 1 / (1^T G~^{-1} 1)` over the members, summing to one.
    pub shares: Vec<f64>,
    /// Whether the balance system was singular and a minimum-norm solution was used.
    pub singular: bool,
}

impl ActiveSetCandidate {
    /// `1^T G~^{-1} 1`.
    pub fn inverse_mass(&self) -> f64 {
        1.0 / self.lambda_per_share
    }
}

/// Candidate active sets for a quadratic network with a success probability,
/// best first. Uses the default enumeration cap of 16 agents.
pub fn optimal_active_set(network: &Network, p: &SuccessProbability) -> Result<Vec<ActiveSetCandidate>> {
    optimal_active_set_with_cap(network, p, 16)
}

/// [`optimal_active_set`] with an explicit cap on the network size.
///
/// With a common link weight `w` the candidates are the maximum cliques, each
/// with `lambda / s = w (k - 1) / k`. Otherwise every connected subset whose
/// induced diameter is at most two and whose balance direction `G~^{-1} 1` is
/// strictly positive is scored by `lambda / s`. Ties go to smaller sets, then
/// to the lexicographically smaller member list.
pub fn optimal_active_set_with_cap(
    network: &Network,
    _p: &SuccessProbability,
    cap: usize,
) -> Result<Vec<ActiveSetCandidate>> {
    let n = network.n();
    let cap = cap.min(MAX_ENUMERATION);
    if n > cap {
        return Err(Error::EnumerationCap { n, cap });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    match network.uniform_weight() {
        Some(w) if w > 0.0 => Ok(maximum_cliques(network)
            .into_iter()
            .map(|members| {
                let k = members.len() as f64;
                let shares = vec![1.0 / k; members.len()];
                ActiveSetCandidate { members, lambda_per_share: w * (k - 1.0) / k, shares, singular: false }
            })
            .collect()),
        _ => Ok(weighted_candidates(network)),
    }
}

/// All maximum cliques in lexicographic order, by Bron-Kerbosch with pivoting.
fn maximum_cliques(network: &Network) -> Vec<Vec<usize>> {
    let n = network.n();
    let neighbors: Vec<u64> = (0..n)
        .map(|i| (0..n).filter(|&j| network.adjacent(i, j)).fold(0u64, |m, j| m | (1 << j)))
        .collect();
    let mut cliques = Vec::new();
    bron_kerbosch(&neighbors, 0, (1u64 << n) - 1, 0, &mut cliques);
    let best = cliques.iter().map(|c| c.count_ones()).max().unwrap_or(0);
    let mut out: Vec<Vec<usize>> = cliques
        .into_iter()
        .filter(|c| c.count_ones() == best)
        .map(|c| (0..n).filter(|&i| c & (1 << i) != 0).collect())
        .collect();
    out.sort();
    out
}

fn bron_kerbosch(neighbors: &[u64], r: u64, mut p: u64, mut x: u64, out: &mut Vec<u64>) {
    if p == 0 && x == 0 {
        out.push(r);
        return;
    }
    let pivot = (p | x).trailing_zeros() as usize;
    let mut candidates = p & !neighbors[pivot];
    while candidates != 0 {
        let v = candidates.trailing_zeros() as usize;
        let bit = 1u64 << v;
        bron_kerbosch(neighbors, r | bit, p & neighbors[v], x & neighbors[v], out);
        p &= !bit;
        x |= bit;
        candidates &= !bit;
    }
}

/// Solve the bordered system `[G~ -1; 1^T 0] [t; lambda] = [0; 1]`.
fn balance_direction(g: &DMatrix<f64>) -> (DVector<f64>, f64, bool) {
    let k = g.nrows();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    m.view_mut((0, 0), (k, k)).copy_from(g);
    for i in 0..k {
        m[(i, k)] = -1.0;
        m[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let svd = m.clone().svd(true, true);
    let smallest = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let singular = smallest <= 1e-12 * scale;
    let sol = if singular {
        svd.solve(&rhs, 1e-12 * scale).unwrap_or_else(|_| DVector::zeros(k + 1))
    } else {
        numeric::solve(&m, &rhs).unwrap_or_else(|| DVector::zeros(k + 1))
    };
    (sol.rows(0, k).into_owned(), sol[k], singular)
}

fn weighted_candidates(network: &Network) -> Vec<ActiveSetCandidate> {
    let n = network.n();
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << n) {
        let members: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        if network.induced_diameter(&members).is_none_or(|d| d > 2) {
            continue;
        }
        let (t, lambda, singular) = balance_direction(&network.submatrix(&members));
        if t.iter().any(|&v| !(v > 1e-12)) || !(lambda >= 0.0) {
            continue;
        }
        out.push(ActiveSetCandidate { members, lambda_per_share: lambda, shares: t.iter().copied().collect(), singular });
    }
    // Scores equal to 12 significant digits count as ties.
    let key = |c: &ActiveSetCandidate| format!("{:.11e}", c.lambda_per_share).parse::<f64>().unwrap_or(0.0);
    out.sort_by(|a, b| {
        key(b)
            .total_cmp(&key(a))
            .then_with(|| a.members.len().cmp(&b.members.len()))
            .then_with(|| a.members.cmp(&b.members))
    });
    out
}
