//! Per-action linear-logistic scorers.
//!
//! Both the reward predictor class (over contexts) and the reward decoder
//! class (over feedback vectors) are instantiated as one logistic-linear
//! function per action. Squashing through the sigmoid keeps every score in
//! (0, 1), so decoded rewards are valid contextual-bandit rewards without
//! clipping, and the complement `1 - score` stays inside the class (negate
//! the parameters).

use serde::{Deserialize, Serialize};

use crate::error::IglError;
use crate::Result;

/// Numerically safe logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Which input space a scorer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Reward predictor: scores contexts.
    Context,
    /// Reward decoder: scores feedback vectors.
    Feedback,
}

/// K linear-logistic functions of a shared input dimension, one per action:
/// `score(z, a) = sigmoid(weights[a] . z + biases[a])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub input_kind: InputKind,
}

impl LinearScorer {
    /// All-zero scorer (every score is exactly 0.5).
    pub fn zeros(num_actions: usize, input_dim: usize, input_kind: InputKind) -> Self {
        Self {
            weights: vec![vec![0.0; input_dim]; num_actions],
            biases: vec![0.0; num_actions],
            input_kind,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Pre-sigmoid activation for action `a`.
    pub fn logit(&self, input: &[f64], action: usize) -> Result<f64> {
        let w = self
            .weights
            .get(action)
            .ok_or_else(|| IglError::Contract(format!("action {action} out of range")))?;
        if w.len() != input.len() {
            return Err(IglError::DimensionMismatch {
                what: "scorer input",
                expected: w.len(),
                got: input.len(),
            });
        }
        let dot: f64 = w.iter().zip(input).map(|(wi, zi)| wi * zi).sum();
        Ok(dot + self.biases[action])
    }

    /// `sigmoid(weights[a] . z + biases[a])`, always in (0, 1) for finite inputs.
    pub fn score(&self, input: &[f64], action: usize) -> Result<f64> {
        Ok(sigmoid(self.logit(input, action)?))
    }

    /// The complement scorer `1 - score`, realized in-class via the identity
    /// `1 - sigmoid(t) = sigmoid(-t)`.
    pub fn complement(&self) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|v| -v).collect())
                .collect(),
            biases: self.biases.iter().map(|b| -b).collect(),
            input_kind: self.input_kind,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scorer() -> LinearScorer {
        LinearScorer {
            weights: vec![vec![1.0, -2.0], vec![0.5, 0.0]],
            biases: vec![0.25, -1.0],
            input_kind: InputKind::Context,
        }
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 0.999_999);
        assert!(sigmoid(-40.0) < 1e-6);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn score_is_in_open_unit_interval() {
        let s = scorer();
        for input in [[0.0, 0.0], [3.0, -4.0], [-100.0, 100.0]] {
            for a in 0..2 {
                let v = s.score(&input, a).unwrap();
                assert!(v > 0.0 && v < 1.0, "score {v} out of (0,1)");
            }
        }
    }

    #[test]
    fn score_increases_with_activation() {
        let s = scorer();
        // weights[0] = [1, -2]: moving along the weight vector raises the score.
        let low = s.score(&[0.0, 0.0], 0).unwrap();
        let high = s.score(&[1.0, -2.0], 0).unwrap();
        assert!(high > low);
    }

    #[test]
    fn complement_is_one_minus_score() {
        let s = scorer();
        let c = s.complement();
        for input in [[0.2, 0.7], [-1.5, 0.1]] {
            for a in 0..2 {
                let direct = 1.0 - s.score(&input, a).unwrap();
                let viaparams = c.score(&input, a).unwrap();
                assert!((direct - viaparams).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = scorer();
        assert!(matches!(
            s.score(&[1.0], 0),
            Err(IglError::DimensionMismatch { .. })
        ));
    }
}
