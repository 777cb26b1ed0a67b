//! Context-to-action-distribution policies.

use serde::{Deserialize, Serialize};

use crate::error::IglError;
use crate::scorer::LinearScorer;
use crate::Result;

/// A policy maps a context to a probability vector over K actions.
///
/// Argmax ties always break toward the lowest action index so that evaluation
/// is deterministic and seed-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// 1/K on every action.
    Uniform { num_actions: usize },
    /// One-hot on a fixed action.
    Constant { num_actions: usize, action: usize },
    /// One-hot on the argmax of a linear-logistic scorer.
    ArgmaxScorer { scorer: LinearScorer },
    /// Explicit row-stochastic table over a finite context set; the context is
    /// either an index or a one-hot vector.
    Tabular { table: Vec<Vec<f64>> },
}

/// Lowest-index argmax.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Policy {
    pub fn num_actions(&self) -> usize {
        match self {
            Policy::Uniform { num_actions } | Policy::Constant { num_actions, .. } => *num_actions,
            Policy::ArgmaxScorer { scorer } => scorer.num_actions(),
            Policy::Tabular { table } => table.first().map_or(0, Vec::len),
        }
    }

    /// Probability vector at a context given as a real vector. Tabular
    /// policies read the context as a one-hot encoding of the context index.
    pub fn probabilities(&self, context: &[f64]) -> Result<Vec<f64>> {
        match self {
            Policy::Tabular { .. } => {
                let idx = one_hot_index(context)?;
                self.probabilities_at_index(idx)
            }
            _ => self.probabilities_inner(context),
        }
    }

    /// Probability vector at a finite-context index (tabular environments).
    pub fn probabilities_at_index(&self, context_index: usize) -> Result<Vec<f64>> {
        match self {
            Policy::Tabular { table } => table.get(context_index).cloned().ok_or_else(|| {
                IglError::Contract(format!("tabular context index {context_index} out of range"))
            }),
            // Context-free variants ignore the index.
            Policy::Uniform { .. } | Policy::Constant { .. } => self.probabilities_inner(&[]),
            Policy::ArgmaxScorer { scorer } => {
                // Scorer policies over tabular contexts read one-hot inputs.
                let mut ctx = vec![0.0; scorer.input_dim()];
                if context_index >= ctx.len() {
                    return Err(IglError::Contract(format!(
                        "tabular context index {context_index} out of range for scorer dim {}",
                        ctx.len()
                    )));
                }
                ctx[context_index] = 1.0;
                self.probabilities_inner(&ctx)
            }
        }
    }

    fn probabilities_inner(&self, context: &[f64]) -> Result<Vec<f64>> {
        match self {
            Policy::Uniform { num_actions } => {
                Ok(vec![1.0 / *num_actions as f64; *num_actions])
            }
            Policy::Constant {
                num_actions,
                action,
            } => {
                if action >= num_actions {
                    return Err(IglError::Contract(format!(
                        "constant action {action} out of range for K={num_actions}"
                    )));
                }
                let mut p = vec![0.0; *num_actions];
                p[*action] = 1.0;
                Ok(p)
            }
            Policy::ArgmaxScorer { scorer } => {
                let scores: Vec<f64> = (0..scorer.num_actions())
                    .map(|a| scorer.score(context, a))
                    .collect::<Result<_>>()?;
                let mut p = vec![0.0; scores.len()];
                p[argmax(&scores)] = 1.0;
                Ok(p)
            }
            Policy::Tabular { .. } => unreachable!("handled by probabilities()"),
        }
    }

    /// The action this policy plays deterministically at test time.
    pub fn argmax_action(&self, context: &[f64]) -> Result<usize> {
        Ok(argmax(&self.probabilities(context)?))
    }
}

fn one_hot_index(context: &[f64]) -> Result<usize> {
    if context.is_empty() {
        return Err(IglError::Contract(
            "tabular policy needs a non-empty one-hot context".into(),
        ));
    }
    Ok(argmax(context))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::InputKind;

    #[test]
    fn uniform_is_one_over_k() {
        let p = Policy::Uniform { num_actions: 4 };
        assert_eq!(p.probabilities(&[1.0, 2.0]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn constant_is_one_hot() {
        let p = Policy::Constant {
            num_actions: 4,
            action: 2,
        };
        assert_eq!(
            p.probabilities(&[0.0]).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn argmax_ties_break_to_lowest_index() {
        // Zero scorer: every action scores exactly 0.5.
        let p = Policy::ArgmaxScorer {
            scorer: LinearScorer::zeros(3, 2, InputKind::Context),
        };
        assert_eq!(p.probabilities(&[1.0, -1.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn probability_vectors_are_valid() {
        let policies = vec![
            Policy::Uniform { num_actions: 7 },
            Policy::Constant {
                num_actions: 7,
                action: 6,
            },
            Policy::Tabular {
                table: vec![vec![0.5, 0.25, 0.25]; 2],
            },
        ];
        for p in policies {
            let ctx = vec![0.0, 1.0];
            let probs = p.probabilities(&ctx).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(probs.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn tabular_reads_one_hot_context() {
        let p = Policy::Tabular {
            table: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(p.probabilities(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(p.probabilities_at_index(0).unwrap(), vec![1.0, 0.0]);
    }
}
