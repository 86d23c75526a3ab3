use serde::{Deserialize, Serialize};

use super::ModelError;

/// Success probability `P(Y)` of a success-or-failure environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SuccessProbability {
    /// `P(Y) = min(slope * Y, 1)`; derivatives are only used below the cap.
    LinearCapped { slope: f64 },
    /// `P(Y) = 1 / (1 + exp(-(Y - shift) / scale))`.
    Logistic { scale: f64, shift: f64 },
    /// `P(Y) = 1 - (1 + Y)^(-r)`.
    Power { r: f64 },
}

impl SuccessProbability {
    /// Performance level at which the probability reaches one, if any.
    pub fn cap(&self) -> Option<f64> {
        match self {
            Self::LinearCapped { slope } => Some(1.0 / slope),
            _ => None,
        }
    }

    /// Whether `P` is concave on the nonnegative half-line.
    pub fn concave_on_nonnegative(&self) -> bool {
        match self {
            Self::LinearCapped { .. } | Self::Power { .. } => true,
            Self::Logistic { shift, .. } => *shift <= 0.0,
        }
    }

    /// `P(Y)`, defined for every `Y >= 0` (saturating at the cap).
    pub fn value(&self, y: f64) -> f64 {
        self.derivs_unchecked(y).0
    }

    /// `(P, P', P'')` with one-sided derivatives beyond the cap.
    pub fn derivs_unchecked(&self, y: f64) -> (f64, f64, f64) {
        match *self {
            Self::LinearCapped { slope } => {
                if slope * y >= 1.0 {
                    (1.0, 0.0, 0.0)
                } else {
                    (slope * y, slope, 0.0)
                }
            }
            Self::Logistic { scale, shift } => {
                let z = (y - shift) / scale;
                let p = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                let q = 1.0 - p;
                let dp = p * q / scale;
                (p, dp, dp * (q - p) / scale)
            }
            Self::Power { r } => {
                let base = 1.0 + y;
                let tail = base.powf(-r);
                (1.0 - tail, r * tail / base, -r * (r + 1.0) * tail / (base * base))
            }
        }
    }

    /// `(P, P', P'')` on the working range, rejecting negative `Y` and the cap.
    pub fn derivs(&self, y: f64) -> Result<(f64, f64, f64), ModelError> {
        if !(y >= 0.0) {
            return Err(ModelError::Negative { what: "performance", value: y });
        }
        if let Some(cap) = self.cap() {
            if y >= cap {
                return Err(ModelError::CapExceeded { y, cap });
            }
        }
        Ok(self.derivs_unchecked(y))
    }
}

/// Probabilities of the contractible outcomes as functions of performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutcomeModel {
    /// Outcome 0 is failure (revenue 0), outcome 1 is success (revenue 1).
    BinarySuccess { success: SuccessProbability },
    /// `P_s(Y) = exp(theta_s Y + bias_s) / sum_t exp(theta_t Y + bias_t)`.
    MultiOutcome { theta: Vec<f64>, bias: Vec<f64>, revenues: Vec<f64> },
}

/// Outcome probabilities and their first two derivatives in `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeProbs {
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub d2p: Vec<f64>,
}

impl OutcomeModel {
    pub fn binary(success: SuccessProbability) -> Self {
        Self::BinarySuccess { success }
    }

    pub fn num_outcomes(&self) -> usize {
        match self {
            Self::BinarySuccess { .. } => 2,
            Self::MultiOutcome { theta, .. } => theta.len(),
        }
    }

    /// Principal's revenue in each outcome.
    pub fn revenues(&self) -> Vec<f64> {
        match self {
            Self::BinarySuccess { .. } => vec![0.0, 1.0],
            Self::MultiOutcome { revenues, .. } => revenues.clone(),
        }
    }

    /// The success probability of a binary model.
    pub fn success(&self) -> Option<&SuccessProbability> {
        match self {
            Self::BinarySuccess { success } => Some(success),
            Self::MultiOutcome { .. } => None,
        }
    }

    /// Probabilities and derivatives, with one-sided derivatives beyond a cap.
    pub fn probs_unchecked(&self, y: f64) -> OutcomeProbs {
        match self {
            Self::BinarySuccess { success } => {
                let (p, dp, d2p) = success.derivs_unchecked(y);
                OutcomeProbs { p: vec![1.0 - p, p], dp: vec![-dp, dp], d2p: vec![-d2p, d2p] }
            }
            Self::MultiOutcome { theta, bias, .. } => {
                let logits: Vec<f64> = theta.iter().zip(bias).map(|(t, b)| t * y + b).collect();
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = weights.iter().sum();
                let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
                let mean: f64 = p.iter().zip(theta).map(|(p, t)| p * t).sum();
                let var: f64 = p.iter().zip(theta).map(|(p, t)| p * (t - mean).powi(2)).sum();
                let dp = p.iter().zip(theta).map(|(p, t)| p * (t - mean)).collect();
                let d2p = p.iter().zip(theta).map(|(p, t)| p * ((t - mean).powi(2) - var)).collect();
                OutcomeProbs { p, dp, d2p }
            }
        }
    }

    /// Outcome probabilities only; total on `Y >= 0`.
    pub fn prob_values(&self, y: f64) -> Vec<f64> {
        match self {
            Self::BinarySuccess { success } => {
                let p = success.value(y);
                vec![1.0 - p, p]
            }
            Self::MultiOutcome { .. } => self.probs_unchecked(y).p,
        }
    }

    /// Probabilities and derivatives on the working range.
    pub fn probs(&self, y: f64) -> Result<OutcomeProbs, ModelError> {
        if let Self::BinarySuccess { success } = self {
            success.derivs(y)?;
        } else if !(y >= 0.0) {
            return Err(ModelError::Negative { what: "performance", value: y });
        }
        Ok(self.probs_unchecked(y))
    }
}

/// `(P_s, P'_s, P''_s)` for every outcome at performance `y`.
pub fn outcome_probs(model: &OutcomeModel, y: f64) -> Result<OutcomeProbs, ModelError> {
    model.probs(y)
}
