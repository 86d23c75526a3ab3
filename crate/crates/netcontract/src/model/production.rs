use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelError, Network};

/// One term `coef * prod_i a_i^powers[i]` of a polynomial production function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Team performance `Y(a)` as a function of the action profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProductionFunction {
    /// `Y = sum_i b_i a_i + 1/2 sum_ij G_ij a_i a_j` with standalone coefficients `b`
    /// (all one when omitted).
    QuadraticNetwork {
        network: Network,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        standalone: Option<Vec<f64>>,
    },
    /// `Y = prod_i a_i^gamma_i`.
    CobbDouglas { gamma: Vec<f64> },
    /// `Y = (sum_i gamma_i a_i^rho)^(kappa / rho)`.
    Ces { gamma: Vec<f64>, rho: f64, kappa: f64 },
    /// Sum of monomials with positive coefficients.
    CustomPolynomial { monomials: Vec<Monomial> },
}

/// Value, gradient and Hessian of a production function at one action profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

fn powi_u(x: f64, p: u32) -> f64 {
    x.powi(p as i32)
}

/// `coef * x^e` with the convention that a zero coefficient annihilates an infinite power.
fn scaled_pow(coef: f64, x: f64, e: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * x.powf(e)
    }
}

impl ProductionFunction {
    /// Quadratic network production with unit standalone coefficients.
    pub fn quadratic(network: Network) -> Self {
        Self::QuadraticNetwork { network, standalone: None }
    }

    /// Number of agents implied by the parameters.
    pub fn n(&self) -> usize {
        match self {
            Self::QuadraticNetwork { network, .. } => network.n(),
            Self::CobbDouglas { gamma } | Self::Ces { gamma, .. } => gamma.len(),
            Self::CustomPolynomial { monomials } => monomials.first().map_or(0, |m| m.powers.len()),
        }
    }

    /// Standalone coefficients of a quadratic network (all one when omitted).
    pub fn standalone(&self) -> Option<Vec<f64>> {
        match self {
            Self::QuadraticNetwork { network, standalone } => {
                Some(standalone.clone().unwrap_or_else(|| vec![1.0; network.n()]))
            }
            _ => None,
        }
    }

    /// Whether the gradient is singular at a zero action.
    pub fn singular_at_zero(&self) -> bool {
        matches!(self, Self::CobbDouglas { .. } | Self::Ces { .. })
    }

    /// `Y(a)`, defined on the whole nonnegative orthant.
    pub fn value(&self, a: &[f64]) -> f64 {
        match self {
            Self::QuadraticNetwork { network, standalone } => {
                let n = a.len();
                let mut y = 0.0;
                for i in 0..n {
                    let b = standalone.as_ref().map_or(1.0, |s| s[i]);
                    y += b * a[i];
                    for j in (i + 1)..n {
                        y += network.link(i, j) * a[i] * a[j];
                    }
                }
                y
            }
            Self::CobbDouglas { gamma } => {
                gamma.iter().zip(a).map(|(&g, &x)| x.powf(g)).product()
            }
            Self::Ces { gamma, rho, kappa } => {
                if *rho < 0.0 && a.contains(&0.0) {
                    return 0.0;
                }
                let s: f64 = gamma.iter().zip(a).map(|(&g, &x)| g * x.powf(*rho)).sum();
                if s == 0.0 {
                    0.0
                } else {
                    s.powf(kappa / rho)
                }
            }
            Self::CustomPolynomial { monomials } => monomials
                .iter()
                .map(|m| m.coef * m.powers.iter().zip(a).map(|(&p, &x)| powi_u(x, p)).product::<f64>())
                .sum(),
        }
    }

    /// `dY/da_i`; may be infinite where the gradient is singular.
    pub fn partial(&self, i: usize, a: &[f64]) -> f64 {
        match self {
            Self::QuadraticNetwork { network, standalone } => {
                let b = standalone.as_ref().map_or(1.0, |s| s[i]);
                b + (0..a.len()).filter(|&j| j != i).map(|j| network.link(i, j) * a[j]).sum::<f64>()
            }
            Self::CobbDouglas { gamma } => {
                let others: f64 = (0..a.len()).filter(|&j| j != i).map(|j| a[j].powf(gamma[j])).product();
                if others == 0.0 {
                    return 0.0;
                }
                scaled_pow(gamma[i], a[i], gamma[i] - 1.0) * others
            }
            Self::Ces { gamma, rho, kappa } => {
                let s: f64 = gamma.iter().zip(a).map(|(&g, &x)| g * x.powf(*rho)).sum();
                if !s.is_finite() && a[i] > 0.0 {
                    return 0.0;
                }
                kappa * s.powf(kappa / rho - 1.0) * scaled_pow(gamma[i], a[i], rho - 1.0)
            }
            Self::CustomPolynomial { monomials } => monomials
                .iter()
                .filter(|m| m.powers[i] > 0)
                .map(|m| {
                    let mut t = m.coef * m.powers[i] as f64 * powi_u(a[i], m.powers[i] - 1);
                    for (j, (&p, &x)) in m.powers.iter().zip(a).enumerate() {
                        if j != i {
                            t *= powi_u(x, p);
                        }
                    }
                    t
                })
                .sum(),
        }
    }

    /// `d^2 Y / da_i da_j`; may be non-finite where the gradient is singular.
    pub fn second_partial(&self, i: usize, j: usize, a: &[f64]) -> f64 {
        match self {
            Self::QuadraticNetwork { network, .. } => {
                if i == j {
                    0.0
                } else {
                    network.link(i, j)
                }
            }
            Self::CobbDouglas { gamma } => {
                let n = a.len();
                let rest: f64 = (0..n).filter(|&k| k != i && k != j).map(|k| a[k].powf(gamma[k])).product();
                if rest == 0.0 {
                    return 0.0;
                }
                if i == j {
                    scaled_pow(gamma[i] * (gamma[i] - 1.0), a[i], gamma[i] - 2.0) * rest
                } else {
                    scaled_pow(gamma[i], a[i], gamma[i] - 1.0) * scaled_pow(gamma[j], a[j], gamma[j] - 1.0) * rest
                }
            }
            Self::Ces { gamma, rho, kappa } => {
                let s: f64 = gamma.iter().zip(a).map(|(&g, &x)| g * x.powf(*rho)).sum();
                let cross = kappa
                    * (kappa - rho)
                    * s.powf(kappa / rho - 2.0)
                    * scaled_pow(gamma[i], a[i], rho - 1.0)
                    * scaled_pow(gamma[j], a[j], rho - 1.0);
                if i == j {
                    cross + kappa * s.powf(kappa / rho - 1.0) * scaled_pow(gamma[i] * (rho - 1.0), a[i], rho - 2.0)
                } else {
                    cross
                }
            }
            Self::CustomPolynomial { monomials } => monomials
                .iter()
                .map(|m| {
                    let mut p = m.powers.clone();
                    let mut c = m.coef;
                    for k in [i, j] {
                        if p[k] == 0 {
                            return 0.0;
                        }
                        c *= p[k] as f64;
                        p[k] -= 1;
                    }
                    c * p.iter().zip(a).map(|(&q, &x)| powi_u(x, q)).product::<f64>()
                })
                .sum(),
        }
    }

    /// Gradient, possibly with non-finite entries at singular points.
    pub fn gradient(&self, a: &[f64]) -> DVector<f64> {
        DVector::from_fn(a.len(), |i, _| self.partial(i, a))
    }

    /// Hessian, possibly with non-finite entries at singular points.
    pub fn hessian(&self, a: &[f64]) -> DMatrix<f64> {
        let n = a.len();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.second_partial(i, j, a);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// Value, gradient and Hessian, rejecting points where the derivatives are singular.
    pub fn eval(&self, a: &[f64]) -> Result<ProductionEval, ModelError> {
        if a.len() != self.n() {
            return Err(ModelError::Dimension(format!(
                "action vector has {} entries for {} agents",
                a.len(),
                self.n()
            )));
        }
        if let Some(&x) = a.iter().find(|&&x| !(x >= 0.0)) {
            return Err(ModelError::Negative { what: "action", value: x });
        }
        if self.singular_at_zero() {
            if let Some(i) = a.iter().position(|&x| x == 0.0) {
                return Err(ModelError::Domain(format!(
                    "gradient is singular at a zero action (agent {i})"
                )));
            }
        }
        Ok(ProductionEval { value: self.value(a), grad: self.gradient(a), hessian: self.hessian(a) })
    }
}

/// Evaluate `Y`, `grad Y` and the Hessian of `prod` at `a`.
pub fn production_eval(prod: &ProductionFunction, a: &[f64]) -> Result<ProductionEval, ModelError> {
    prod.eval(a)
}
