//! Core record types flowing through simulation, decoding, and training.

use serde::{Deserialize, Serialize};

use crate::error::IglError;
use crate::Result;

/// One logged (context, action, feedback, propensity) step. This is all an
/// IGL learner is ever allowed to see: the latent reward is not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedInteraction {
    pub context: Vec<f64>,
    pub action: usize,
    pub feedback: Vec<f64>,
    /// Behavior-policy probability of `action` at `context`, in (0, 1].
    pub propensity: f64,
}

impl LoggedInteraction {
    pub fn validate(&self, num_actions: usize) -> Result<()> {
        if self.action >= num_actions {
            return Err(IglError::Contract(format!(
                "action {} out of range for K={num_actions}",
                self.action
            )));
        }
        if !(self.propensity > 0.0 && self.propensity <= 1.0) {
            return Err(IglError::Contract(format!(
                "propensity {} outside (0, 1]",
                self.propensity
            )));
        }
        if self.context.iter().chain(&self.feedback).any(|v| !v.is_finite()) {
            return Err(IglError::Contract("non-finite context or feedback".into()));
        }
        Ok(())
    }
}

/// A logged step whose feedback has been replaced by a decoded reward in
/// [0, 1]; the unit of contextual-bandit training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedInteraction {
    pub context: Vec<f64>,
    pub action: usize,
    pub decoded_reward: f64,
    pub propensity: f64,
}

/// Realized latent rewards of a simulated log, quarantined from learners.
///
/// IGL algorithms receive `&[LoggedInteraction]` only; the single way to turn
/// these rewards into trainable records is [`SimulatedLog::unseal_true_rewards`],
/// which exists for the evaluator and the skyline baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueRewards(pub(crate) Vec<u8>);

impl TrueRewards {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Read-only view for evaluation code.
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// A simulated batch: the observable log plus the sealed reward channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedLog {
    pub interactions: Vec<LoggedInteraction>,
    pub true_rewards: TrueRewards,
}

impl SimulatedLog {
    /// Contextual-bandit records with the *true* reward substituted for the
    /// feedback. Simulation-only: this is the skyline's information advantage.
    pub fn unseal_true_rewards(&self) -> Vec<DecodedInteraction> {
        self.interactions
            .iter()
            .zip(&self.true_rewards.0)
            .map(|(rec, &r)| DecodedInteraction {
                context: rec.context.clone(),
                action: rec.action,
                decoded_reward: r as f64,
                propensity: rec.propensity,
            })
            .collect()
    }
}

/// Conditional diagnostics for one action: expected predictor/decoder outputs
/// given each latent reward value, plus that action's average reward and
/// visitation under the reference policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMeans {
    pub f_a0: f64,
    pub f_a1: f64,
    pub psi_a0: f64,
    pub psi_a1: f64,
    /// Average latent reward when the policy takes this action.
    pub rho_a: f64,
    /// Probability that the policy takes this action at all.
    pub d_a: f64,
}

impl ConditionalMeans {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.f_a0, self.f_a1, self.psi_a0, self.psi_a1, self.rho_a, self.d_a,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(IglError::Contract("non-finite conditional means".into()));
        }
        if !(0.0..=1.0).contains(&self.rho_a) || !(0.0..=1.0).contains(&self.d_a) {
            return Err(IglError::Contract(
                "rho_a and d_a must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}
