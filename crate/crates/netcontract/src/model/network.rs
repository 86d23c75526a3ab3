use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::serde_matrix;

fn unit_scale() -> f64 {
    1.0
}

/// Undirected weighted network of complementarities.
///
/// The effective spillover matrix is `beta * weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    #[serde(with = "serde_matrix::rows")]
    pub weights: DMatrix<f64>,
    #[serde(default = "unit_scale")]
    pub beta: f64,
}

impl Network {
    /// Network with unit scale.
    pub fn new(weights: DMatrix<f64>) -> Self {
        Self { weights, beta: 1.0 }
    }

    /// Network from row-major weights with unit scale.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN)))
    }

    /// Network with no links.
    pub fn empty(n: usize) -> Self {
        Self::new(DMatrix::zeros(n, n))
    }

    /// Network from an undirected edge list `(i, j, weight)` with zero-based indices.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut net = Self::empty(n);
        for &(i, j, w) in edges {
            net.weights[(i, j)] = w;
            net.weights[(j, i)] = w;
        }
        net
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    /// Effective spillover matrix `G = beta * weights`.
    pub fn effective(&self) -> DMatrix<f64> {
        &self.weights * self.beta
    }

    /// Effective weight of the link between `i` and `j`.
    pub fn link(&self, i: usize, j: usize) -> f64 {
        self.beta * self.weights[(i, j)]
    }

    /// Copy with the effective weight of link `(i, j)` set to `w` on both entries.
    pub fn with_link(&self, i: usize, j: usize, w: f64) -> Self {
        let mut out = self.clone();
        out.weights[(i, j)] = w / self.beta;
        out.weights[(j, i)] = w / self.beta;
        out
    }

    /// Copy with a different overall scale.
    pub fn with_beta(&self, beta: f64) -> Self {
        Self { weights: self.weights.clone(), beta }
    }

    /// Whether `i` and `j` are linked.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i != j && self.link(i, j) > 0.0
    }

    /// The common effective weight if every link has the same weight.
    ///
    /// Returns `Some(0.0)` for a network without links and `None` when link
    /// weights differ by more than a relative `1e-12`.
    pub fn uniform_weight(&self) -> Option<f64> {
        let n = self.n();
        let mut common: Option<f64> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.link(i, j);
                if w <= 0.0 {
                    continue;
                }
                match common {
                    None => common = Some(w),
                    Some(c) if (w - c).abs() <= 1e-12 * c => {}
                    Some(_) => return None,
                }
            }
        }
        Some(common.unwrap_or(0.0))
    }

    /// Effective submatrix on the given agents, in the order given.
    pub fn submatrix(&self, members: &[usize]) -> DMatrix<f64> {
        let k = members.len();
        DMatrix::from_fn(k, k, |a, b| self.link(members[a], members[b]))
    }

    /// Diameter of the subgraph induced by `members`, `None` if it is disconnected.
    pub fn induced_diameter(&self, members: &[usize]) -> Option<usize> {
        let k = members.len();
        let mut diameter = 0;
        for start in 0..k {
            let mut dist = vec![usize::MAX; k];
            dist[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for v in 0..k {
                    if dist[v] == usize::MAX && self.adjacent(members[u], members[v]) {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            for &d in &dist {
                if d == usize::MAX {
                    return None;
                }
                diameter = diameter.max(d);
            }
        }
        Some(diameter)
    }
}
