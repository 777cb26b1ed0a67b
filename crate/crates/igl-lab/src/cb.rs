//! Offline contextual-bandit oracle and policy evaluation.
//!
//! The oracle fits a per-action linear-logistic reward regressor by
//! minimizing inverse-propensity-weighted squared error over
//! (context, action, reward, propensity) records, then acts greedily on the
//! fitted scores. Importance weights are normalized by their dataset mean, so
//! a log collected under the uniform policy trains exactly like an unweighted
//! one.
//!
//! The oracle consumes [`DecodedInteraction`]s only; nothing here can reach a
//! simulated log's sealed true-reward channel.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::SupervisedDataset;
use crate::error::IglError;
use crate::policy::Policy;
use crate::records::DecodedInteraction;
use crate::rng::{derive_seed, rng_from_seed};
use crate::scorer::{InputKind, LinearScorer};
use crate::Result;

/// SGD settings for the reward regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbConfig {
    pub num_actions: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Shuffle once before training (default) or before every epoch.
    pub shuffle_per_epoch: bool,
    pub seed: u64,
}

impl Default for CbConfig {
    fn default() -> Self {
        Self {
            num_actions: 2,
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 64,
            shuffle_per_epoch: false,
            seed: 0,
        }
    }
}

/// Train the argmax policy on decoded records.
pub fn train_cb_policy(records: &[DecodedInteraction], config: &CbConfig) -> Result<Policy> {
    if records.is_empty() {
        return Err(IglError::Contract("no records to train on".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 || config.learning_rate <= 0.0 {
        return Err(IglError::Config(
            "epochs, batch_size, and learning_rate must be positive".into(),
        ));
    }
    let dim = records[0].context.len();
    for (i, rec) in records.iter().enumerate() {
        if rec.context.len() != dim {
            return Err(IglError::DimensionMismatch {
                what: "record context",
                expected: dim,
                got: rec.context.len(),
            });
        }
        if rec.action >= config.num_actions {
            return Err(IglError::Contract(format!(
                "record {i} action {} out of range for K={}",
                rec.action, config.num_actions
            )));
        }
        if !(rec.propensity > 0.0) {
            return Err(IglError::Contract(format!(
                "record {i} propensity {} must be positive",
                rec.propensity
            )));
        }
    }

    // Mean-normalized inverse-propensity weights: constant propensities give
    // weights identically 1, i.e. plain regression.
    let mean_inv: f64 =
        records.iter().map(|r| 1.0 / r.propensity).sum::<f64>() / records.len() as f64;
    let weights_ips: Vec<f64> = records
        .iter()
        .map(|r| (1.0 / r.propensity) / mean_inv)
        .collect();

    let mut scorer = LinearScorer::zeros(config.num_actions, dim, InputKind::Context);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = rng_from_seed(config.seed);
    order.shuffle(&mut rng);

    for epoch in 0..config.epochs {
        if config.shuffle_per_epoch && epoch > 0 {
            let mut rng = rng_from_seed(derive_seed(config.seed, epoch as u64));
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(config.batch_size) {
            let mut grad_w = vec![vec![0.0; dim]; config.num_actions];
            let mut grad_b = vec![0.0; config.num_actions];
            for &i in batch {
                let rec = &records[i];
                let s = scorer.score(&rec.context, rec.action)?;
                // d/dt of w * (sigmoid(t) - r)^2
                let g = weights_ips[i] * 2.0 * (s - rec.decoded_reward) * s * (1.0 - s);
                for (gw, x) in grad_w[rec.action].iter_mut().zip(&rec.context) {
                    *gw += g * x;
                }
                grad_b[rec.action] += g;
            }
            let scale = config.learning_rate / batch.len() as f64;
            for a in 0..config.num_actions {
                for (w, g) in scorer.weights[a].iter_mut().zip(&grad_w[a]) {
                    *w -= scale * g;
                }
                scorer.biases[a] -= scale * grad_b[a];
            }
        }
        if scorer
            .weights
            .iter()
            .flatten()
            .chain(scorer.biases.iter())
            .any(|v| !v.is_finite())
        {
            return Err(IglError::OptimizationDiverged {
                epoch,
                details: "non-finite regressor parameters".into(),
            });
        }
    }

    Ok(Policy::ArgmaxScorer { scorer })
}

/// Fraction of eval rows whose argmax action equals the label.
pub fn evaluate_policy(policy: &Policy, eval: &SupervisedDataset) -> Result<f64> {
    let mut correct = 0usize;
    for i in 0..eval.num_rows() {
        if policy.argmax_action(eval.row(i))? == eval.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval.num_rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;
    use crate::synth::{generate, SyntheticSpec};
    use rand::Rng;

    fn separable_records(
        n: usize,
        k: usize,
        seed: u64,
    ) -> (Vec<DecodedInteraction>, SupervisedDataset) {
        let spec = SyntheticSpec {
            num_classes: k,
            num_features: 6,
            num_rows: n,
            separation: 5.0,
            label_noise: 0.0,
            seed,
        };
        let ds = crate::data::standardize(&generate(&spec).unwrap()).unwrap().0;
        let mut rng = derived_rng(seed, 99);
        let records = (0..n)
            .map(|i| {
                let action = rng.gen_range(0..k);
                DecodedInteraction {
                    context: ds.row(i).to_vec(),
                    action,
                    decoded_reward: f64::from(action == ds.labels[i]),
                    propensity: 1.0 / k as f64,
                }
            })
            .collect();
        (records, ds)
    }

    #[test]
    fn separable_rewards_train_an_accurate_policy() {
        let (records, ds) = separable_records(5000, 3, 1);
        let config = CbConfig {
            num_actions: 3,
            seed: 1,
            ..Default::default()
        };
        let policy = train_cb_policy(&records, &config).unwrap();
        let acc = evaluate_policy(&policy, &ds).unwrap();
        assert!(acc >= 0.98, "accuracy {acc}");
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (records, _) = separable_records(500, 3, 2);
        let config = CbConfig {
            num_actions: 3,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(
            train_cb_policy(&records, &config).unwrap(),
            train_cb_policy(&records, &config).unwrap()
        );
    }

    #[test]
    fn identical_rewards_tie_break_to_action_zero() {
        // Symmetric per-action data: one shared context, constant reward, the
        // same number of records per action. The fits coincide, so the argmax
        // must fall back to the lowest index.
        let mut records = Vec::new();
        for a in 0..3 {
            for _ in 0..10 {
                records.push(DecodedInteraction {
                    context: vec![1.0, -0.5],
                    action: a,
                    decoded_reward: 1.0,
                    propensity: 1.0 / 3.0,
                });
            }
        }
        let config = CbConfig {
            num_actions: 3,
            seed: 7,
            ..Default::default()
        };
        let policy = train_cb_policy(&records, &config).unwrap();
        assert_eq!(policy.argmax_action(&[1.0, -0.5]).unwrap(), 0);
    }

    #[test]
    fn uniform_propensities_match_unweighted_regression() {
        let (mut records, _) = separable_records(800, 4, 3);
        let config = CbConfig {
            num_actions: 4,
            seed: 11,
            ..Default::default()
        };
        let weighted = train_cb_policy(&records, &config).unwrap();
        // Degenerate propensity of 1.0 on every record: also constant.
        for rec in &mut records {
            rec.propensity = 1.0;
        }
        let unweighted = train_cb_policy(&records, &config).unwrap();
        let (Policy::ArgmaxScorer { scorer: a }, Policy::ArgmaxScorer { scorer: b }) =
            (&weighted, &unweighted)
        else {
            panic!("expected scorer policies");
        };
        for (wa, wb) in a.weights.iter().flatten().zip(b.weights.iter().flatten()) {
            assert!((wa - wb).abs() < 1e-9);
        }
        for (ba, bb) in a.biases.iter().zip(&b.biases) {
            assert!((ba - bb).abs() < 1e-9);
        }
    }

    #[test]
    fn more_data_does_not_hurt() {
        let mut small_total = 0.0;
        let mut large_total = 0.0;
        for seed in 0..10 {
            let (small, ds_small) = separable_records(1000, 3, 100 + seed);
            let (large, ds_large) = separable_records(10_000, 3, 200 + seed);
            let config = CbConfig {
                num_actions: 3,
                seed,
                ..Default::default()
            };
            small_total +=
                evaluate_policy(&train_cb_policy(&small, &config).unwrap(), &ds_small).unwrap();
            large_total +=
                evaluate_policy(&train_cb_policy(&large, &config).unwrap(), &ds_large).unwrap();
        }
        assert!(
            large_total >= small_total,
            "mean accuracy with 10x data fell: {large_total} < {small_total}"
        );
    }

    #[test]
    fn empty_records_are_rejected() {
        let config = CbConfig::default();
        assert!(train_cb_policy(&[], &config).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let ds = SupervisedDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![0, 0, 0, 1],
            2,
        )
        .unwrap();
        // Constant policy on the most frequent label.
        let constant = Policy::Constant {
            num_actions: 2,
            action: 0,
        };
        assert_eq!(evaluate_policy(&constant, &ds).unwrap(), 0.75);
        // Uniform policy under argmax tie-breaking always plays 0.
        let uniform = Policy::Uniform { num_actions: 2 };
        assert_eq!(evaluate_policy(&uniform, &ds).unwrap(), 0.75);
    }

    #[test]
    fn perfect_scorer_scores_one() {
        // One feature; label 1 iff feature positive.
        let ds = SupervisedDataset::new(
            vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let scorer = LinearScorer {
            weights: vec![vec![-5.0], vec![5.0]],
            biases: vec![0.0, 0.0],
            input_kind: InputKind::Context,
        };
        let policy = Policy::ArgmaxScorer { scorer };
        assert_eq!(evaluate_policy(&policy, &ds).unwrap(), 1.0);
    }
}
