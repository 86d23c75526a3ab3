use serde::{Deserialize, Serialize};

use super::ModelError;

/// Agent's utility of money.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Utility {
    Linear,
    Sqrt,
    /// `u(t) = t^eta` with `eta` in (0, 1).
    Power { eta: f64 },
    /// `u(t) = ln(1 + t)`.
    Log1p,
}

impl Utility {
    /// Whether marginal utility diverges at zero pay.
    pub fn is_inada(&self) -> bool {
        matches!(self, Self::Sqrt | Self::Power { .. })
    }

    /// `u(t)`; callers guarantee `t >= 0`.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Self::Linear => t,
            Self::Sqrt => t.sqrt(),
            Self::Power { eta } => t.powf(eta),
            Self::Log1p => t.ln_1p(),
        }
    }

    /// `u'(t)`, equal to `f64::INFINITY` at zero for the Inada variants.
    pub fn marginal(&self, t: f64) -> f64 {
        match *self {
            Self::Linear => 1.0,
            Self::Sqrt => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    0.5 / t.sqrt()
                }
            }
            Self::Power { eta } => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    eta * t.powf(eta - 1.0)
                }
            }
            Self::Log1p => 1.0 / (1.0 + t),
        }
    }

    /// `(u(t), u'(t))`, rejecting negative pay.
    pub fn eval(&self, t: f64) -> Result<(f64, f64), ModelError> {
        if !(t >= 0.0) {
            return Err(ModelError::Negative { what: "payment", value: t });
        }
        Ok((self.value(t), self.marginal(t)))
    }
}

/// Utility value and marginal utility of a payment.
pub fn utility_eval(u: &Utility, t: f64) -> Result<(f64, f64), ModelError> {
    u.eval(t)
}

fn unit_scale() -> f64 {
    1.0
}

fn quadratic_exponent() -> f64 {
    2.0
}

/// Effort cost `C(a) = scale * a^exponent / exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFunction {
    #[serde(default = "unit_scale")]
    pub scale: f64,
    #[serde(default = "quadratic_exponent")]
    pub exponent: f64,
}

impl Default for CostFunction {
    fn default() -> Self {
        Self::quadratic()
    }
}

impl CostFunction {
    /// `C(a) = a^2 / 2`.
    pub fn quadratic() -> Self {
        Self { scale: 1.0, exponent: 2.0 }
    }

    pub fn is_unit_quadratic(&self) -> bool {
        self.scale == 1.0 && self.exponent == 2.0
    }

    pub fn value(&self, a: f64) -> f64 {
        self.scale * a.powf(self.exponent) / self.exponent
    }

    pub fn marginal(&self, a: f64) -> f64 {
        self.scale * a.powf(self.exponent - 1.0)
    }

    pub fn curvature(&self, a: f64) -> f64 {
        if self.exponent == 2.0 {
            self.scale
        } else {
            self.scale * (self.exponent - 1.0) * a.powf(self.exponent - 2.0)
        }
    }
}
