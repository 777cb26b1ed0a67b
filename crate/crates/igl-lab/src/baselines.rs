//! Comparison systems: the true-reward skyline and the decoded-return
//! baseline that assumes fully conditionally independent feedback.
//!
//! The skyline trains the contextual-bandit oracle on the sealed true
//! rewards; it upper-bounds what any feedback-grounded method can do. The
//! full-CI baseline jointly fits an action-blind decoder `psi: Y -> [0, 1]`
//! and a softmax policy by ascending the self-normalized importance-weighted
//! estimate of `V(pi, psi) - V(pi_bad, psi)`. When feedback encodes the
//! action, that objective has degenerate maximizers (play one action, decode
//! its own signature), which is exactly the failure mode this baseline
//! exists to demonstrate.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cb::{train_cb_policy, CbConfig};
use crate::error::IglError;
use crate::policy::Policy;
use crate::records::{LoggedInteraction, SimulatedLog};
use crate::rng::{derived_rng, rng_from_seed};
use crate::scorer::{sigmoid, InputKind, LinearScorer};
use crate::Result;

/// Train the CB oracle on (context, action, true reward, propensity).
pub fn run_cb_skyline(log: &SimulatedLog, config: &CbConfig) -> Result<Policy> {
    train_cb_policy(&log.unseal_true_rewards(), config)
}

/// Optimizer settings for the full-CI baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullCiConfig {
    pub num_actions: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub restarts: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for FullCiConfig {
    fn default() -> Self {
        Self {
            num_actions: 2,
            learning_rate: 1.0,
            epochs: 10,
            batch_size: 64,
            restarts: 4,
            init_std: 0.3,
            seed: 0,
        }
    }
}

/// Self-normalized importance-weighted decoded return of `pi` on a log:
/// `sum_i w_i psi(y_i) / sum_i w_i` with `w_i = pi(a_i | x_i) / propensity_i`.
pub fn decoded_value(
    log: &[LoggedInteraction],
    pi: &Policy,
    psi: &LinearScorer,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for rec in log {
        let w = pi.probabilities(&rec.context)?[rec.action] / rec.propensity;
        num += w * psi.score(&rec.feedback, 0)?;
        den += w;
    }
    if den <= 0.0 {
        return Err(IglError::InsufficientData {
            action: 0,
            details: "policy puts no weight on any logged action".into(),
        });
    }
    Ok(num / den)
}

/// The decoded-return objective `V(pi, psi) - V(pi_bad, psi)`. With a
/// constant decoder both terms coincide, so the objective is exactly zero
/// for every policy.
pub fn full_ci_objective(
    log: &[LoggedInteraction],
    pi: &Policy,
    psi: &LinearScorer,
    pi_bad: &Policy,
) -> Result<f64> {
    Ok(decoded_value(log, pi, psi)? - decoded_value(log, pi_bad, psi)?)
}

struct SoftmaxParams {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl SoftmaxParams {
    fn probabilities(&self, context: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(context).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }
}

/// Alternating stochastic ascent of the decoded-return objective over a
/// softmax-parameterized linear policy and a single logistic decoder, with
/// restarts keeping the run whose final full-data objective is largest.
/// Returns the argmax-hardened policy.
pub fn run_full_ci_igl(
    log: &[LoggedInteraction],
    pi_bad: &Policy,
    config: &FullCiConfig,
) -> Result<Policy> {
    if log.is_empty() {
        return Err(IglError::Contract("empty log".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 || config.restarts == 0 {
        return Err(IglError::Config(
            "epochs, batch_size, and restarts must be positive".into(),
        ));
    }
    let k = config.num_actions;
    let dim = log[0].context.len();
    let fb_dim = log[0].feedback.len();
    for rec in log {
        rec.validate(k)?;
    }

    // pi_bad weights do not change during training.
    let bad_weights: Vec<f64> = log
        .iter()
        .map(|rec| {
            Ok(pi_bad.probabilities(&rec.context)?[rec.action] / rec.propensity)
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, SoftmaxParams)> = None;
    for restart in 0..config.restarts {
        let mut rng = derived_rng(config.seed, restart as u64);
        let normal = Normal::new(0.0, config.init_std).expect("finite std");
        let mut theta = SoftmaxParams {
            weights: (0..k)
                .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
                .collect(),
            biases: (0..k).map(|_| normal.sample(&mut rng)).collect(),
        };
        let mut psi_w: Vec<f64> = (0..fb_dim).map(|_| normal.sample(&mut rng)).collect();
        let mut psi_b: f64 = normal.sample(&mut rng);

        let mut order: Vec<usize> = (0..log.len()).collect();
        let mut shuffle_rng = rng_from_seed(config.seed ^ restart as u64);
        order.shuffle(&mut shuffle_rng);

        for epoch in 0..config.epochs {
            for batch in order.chunks(config.batch_size) {
                step_batch(
                    log,
                    batch,
                    &bad_weights,
                    &mut theta,
                    &mut psi_w,
                    &mut psi_b,
                    config.learning_rate,
                )?;
            }
            if theta.weights.iter().flatten().any(|v| !v.is_finite())
                || psi_w.iter().any(|v| !v.is_finite())
            {
                return Err(IglError::OptimizationDiverged {
                    epoch,
                    details: "non-finite baseline parameters".into(),
                });
            }
        }

        let final_obj = objective_of(log, &bad_weights, &theta, &psi_w, psi_b);
        if best.as_ref().map_or(true, |(b, _)| final_obj > *b) {
            best = Some((final_obj, theta));
        }
    }

    let (_, theta) = best.expect("at least one restart");
    // Argmax of the softmax logits equals argmax of the sigmoid scores of the
    // same linear functions.
    Ok(Policy::ArgmaxScorer {
        scorer: LinearScorer {
            weights: theta.weights,
            biases: theta.biases,
            input_kind: InputKind::Context,
        },
    })
}

fn psi_out(psi_w: &[f64], psi_b: f64, feedback: &[f64]) -> f64 {
    sigmoid(
        psi_w
            .iter()
            .zip(feedback)
            .map(|(w, y)| w * y)
            .sum::<f64>()
            + psi_b,
    )
}

fn objective_of(
    log: &[LoggedInteraction],
    bad_weights: &[f64],
    theta: &SoftmaxParams,
    psi_w: &[f64],
    psi_b: f64,
) -> f64 {
    let mut num_pi = 0.0;
    let mut den_pi = 0.0;
    let mut num_bad = 0.0;
    let mut den_bad = 0.0;
    for (rec, &wb) in log.iter().zip(bad_weights) {
        let p = psi_out(psi_w, psi_b, &rec.feedback);
        let w = theta.probabilities(&rec.context)[rec.action] / rec.propensity;
        num_pi += w * p;
        den_pi += w;
        num_bad += wb * p;
        den_bad += wb;
    }
    num_pi / den_pi.max(f64::MIN_POSITIVE) - num_bad / den_bad.max(f64::MIN_POSITIVE)
}

#[allow(clippy::too_many_arguments)]
fn step_batch(
    log: &[LoggedInteraction],
    batch: &[usize],
    bad_weights: &[f64],
    theta: &mut SoftmaxParams,
    psi_w: &mut [f64],
    psi_b: &mut f64,
    lr: f64,
) -> Result<()> {
    let k = theta.weights.len();
    let n = batch.len();

    // Forward pass on the batch.
    let mut probs = Vec::with_capacity(n);
    let mut w_pi = Vec::with_capacity(n);
    let mut psis = Vec::with_capacity(n);
    let mut w_bad_sum = 0.0;
    for &i in batch {
        let rec = &log[i];
        let p = theta.probabilities(&rec.context);
        w_pi.push(p[rec.action] / rec.propensity);
        probs.push(p);
        psis.push(psi_out(psi_w, *psi_b, &rec.feedback));
        w_bad_sum += bad_weights[i];
    }
    let w_pi_sum: f64 = w_pi.iter().sum();
    if w_pi_sum <= 0.0 || w_bad_sum <= 0.0 {
        return Ok(()); // nothing to estimate on this batch
    }
    let v_pi: f64 = w_pi.iter().zip(&psis).map(|(w, p)| w * p).sum::<f64>() / w_pi_sum;
    let v_bad: f64 = batch
        .iter()
        .zip(&psis)
        .map(|(&i, p)| bad_weights[i] * p)
        .sum::<f64>()
        / w_bad_sum;

    // Decoder ascent: dJ/dpsi_i = w_i/W_pi - wb_i/W_bad, through the sigmoid.
    let mut g_psi_w = vec![0.0; psi_w.len()];
    let mut g_psi_b = 0.0;
    for (j, &i) in batch.iter().enumerate() {
        let rec = &log[i];
        let dpsi = w_pi[j] / w_pi_sum - bad_weights[i] / w_bad_sum;
        let d = dpsi * psis[j] * (1.0 - psis[j]);
        for (g, y) in g_psi_w.iter_mut().zip(&rec.feedback) {
            *g += d * y;
        }
        g_psi_b += d;
    }

    // Policy ascent through the self-normalized weights:
    // dJ/dtheta_a = sum_i w_i (1(a = a_i) - pi(a | x_i)) x_i (psi_i - V_pi) / W_pi.
    let dim = theta.weights[0].len();
    let mut g_theta_w = vec![vec![0.0; dim]; k];
    let mut g_theta_b = vec![0.0; k];
    for (j, &i) in batch.iter().enumerate() {
        let rec = &log[i];
        let coeff = w_pi[j] * (psis[j] - v_pi) / w_pi_sum;
        for a in 0..k {
            let indicator = f64::from(a == rec.action);
            let c = coeff * (indicator - probs[j][a]);
            for (g, x) in g_theta_w[a].iter_mut().zip(&rec.context) {
                *g += c * x;
            }
            g_theta_b[a] += c;
        }
    }

    let scale = lr;
    for (w, g) in psi_w.iter_mut().zip(&g_psi_w) {
        *w += scale * g;
    }
    *psi_b += scale * g_psi_b;
    for a in 0..k {
        for (w, g) in theta.weights[a].iter_mut().zip(&g_theta_w[a]) {
            *w += scale * g;
        }
        theta.biases[a] += scale * g_theta_b[a];
    }
    let _ = v_bad;
    Ok(())
}
