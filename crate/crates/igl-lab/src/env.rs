//! IGL environments.
//!
//! A supervised dataset becomes an IGL environment by drawing contexts
//! uniformly from its rows, treating prediction correctness as the latent
//! binary reward, and emitting a feedback vector that is a function of
//! `(action, reward)` only — never of the context. That last property is the
//! context conditional independence the decoders rely on, and it holds here
//! by construction for every encoder variant.
//!
//! Fully enumerable tabular environments live here too; they are the ground
//! truth for the exact oracle computations.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::SupervisedDataset;
use crate::error::IglError;
use crate::policy::Policy;
use crate::records::{LoggedInteraction, SimulatedLog, TrueRewards};
use crate::rng::rng_from_seed;
use crate::Result;

const PROB_TOL: f64 = 1e-12;

/// Default digit shift `6r - 3`: failure at offset -3, success at +3.
pub const DEFAULT_SHIFT: (i64, i64) = (-3, 3);

#[doc(hidden)]
pub fn default_shift0() -> i64 {
    DEFAULT_SHIFT.0
}

#[doc(hidden)]
pub fn default_shift1() -> i64 {
    DEFAULT_SHIFT.1
}

/// How (action, reward) turns into a feedback vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackEncoder {
    /// y = (a, r) as a length-2 vector. Action-inclusive.
    PairVector,
    /// y = one-hot of `(a + shift(r)) mod base`; the default shift `6r - 3`
    /// moves success and failure to opposite digit offsets. Action-inclusive.
    DigitOneHot {
        base: usize,
        #[serde(default = "default_shift0")]
        shift0: i64,
        #[serde(default = "default_shift1")]
        shift1: i64,
    },
    /// Like `DigitOneHot`, but y is the feature row of a uniformly drawn pool
    /// example whose label equals the encoded digit. Action-inclusive.
    DigitExemplar {
        base: usize,
        #[serde(default = "default_shift0")]
        shift0: i64,
        #[serde(default = "default_shift1")]
        shift1: i64,
        pool: SupervisedDataset,
    },
    /// y = one-hot of r in dimension 2. Action-exclusive.
    RewardOneHot,
    /// y = features of a uniformly drawn pool row labelled r. Action-exclusive.
    RewardExemplar { pool: SupervisedDataset },
    /// y = one-hot over a finite feedback set drawn from Pr(y | a, r).
    TabularKernel {
        /// `table[r][a][y]`, each row a probability vector.
        table: Vec<Vec<Vec<f64>>>,
    },
}

impl FeedbackEncoder {
    /// Digit one-hot with the default shift map.
    pub fn digit_one_hot(base: usize) -> Self {
        FeedbackEncoder::DigitOneHot {
            base,
            shift0: DEFAULT_SHIFT.0,
            shift1: DEFAULT_SHIFT.1,
        }
    }

    /// Digit exemplar with the default shift map.
    pub fn digit_exemplar(base: usize, pool: SupervisedDataset) -> Self {
        FeedbackEncoder::DigitExemplar {
            base,
            shift0: DEFAULT_SHIFT.0,
            shift1: DEFAULT_SHIFT.1,
            pool,
        }
    }
}

fn one_hot(index: usize, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[index] = 1.0;
    v
}

/// Pool rows grouped by label, for exemplar encoders.
fn pool_index(pool: &SupervisedDataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); pool.num_classes];
    for (i, &l) in pool.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

impl FeedbackEncoder {
    /// Dimension of the emitted feedback vectors.
    pub fn feedback_dim(&self) -> usize {
        match self {
            FeedbackEncoder::PairVector => 2,
            FeedbackEncoder::DigitOneHot { base, .. } => *base,
            FeedbackEncoder::DigitExemplar { pool, .. } => pool.num_features,
            FeedbackEncoder::RewardOneHot => 2,
            FeedbackEncoder::RewardExemplar { pool } => pool.num_features,
            FeedbackEncoder::TabularKernel { table } => {
                table.first().and_then(|r| r.first()).map_or(0, Vec::len)
            }
        }
    }

    /// Check the encoder can serve every (action, reward) pair it may be asked
    /// for. Exemplar pools must contain every target class.
    pub fn validate(&self, num_actions: usize) -> Result<()> {
        match self {
            FeedbackEncoder::PairVector | FeedbackEncoder::RewardOneHot => Ok(()),
            FeedbackEncoder::DigitOneHot { base, shift0, shift1 } => {
                if *base == 0 {
                    return Err(IglError::EnvConstruction("digit base must be > 0".into()));
                }
                if (shift1 - shift0).rem_euclid(*base as i64) == 0 {
                    return Err(IglError::EnvConstruction(format!(
                        "shift map ({shift0}, {shift1}) collapses mod {base}: feedback would carry no reward information"
                    )));
                }
                Ok(())
            }
            FeedbackEncoder::DigitExemplar { base, shift0, shift1, pool } => {
                if (shift1 - shift0).rem_euclid(*base as i64) == 0 {
                    return Err(IglError::EnvConstruction(format!(
                        "shift map ({shift0}, {shift1}) collapses mod {base}: feedback would carry no reward information"
                    )));
                }
                let classes = pool_index(pool);
                for a in 0..num_actions {
                    for r in [0u8, 1] {
                        let digit = encoded_digit(a, r, *base, (*shift0, *shift1));
                        if classes.get(digit).map_or(true, Vec::is_empty) {
                            return Err(IglError::EnvConstruction(format!(
                                "exemplar pool has no rows of class {digit} (needed for a={a}, r={r})"
                            )));
                        }
                    }
                }
                Ok(())
            }
            FeedbackEncoder::RewardExemplar { pool } => {
                let classes = pool_index(pool);
                for r in 0..2usize {
                    if classes.get(r).map_or(true, Vec::is_empty) {
                        return Err(IglError::EnvConstruction(format!(
                            "exemplar pool has no rows of class {r}"
                        )));
                    }
                }
                Ok(())
            }
            FeedbackEncoder::TabularKernel { table } => {
                if table.len() != 2 {
                    return Err(IglError::EnvConstruction(
                        "tabular kernel needs rows for r=0 and r=1".into(),
                    ));
                }
                for rows in table {
                    if rows.len() < num_actions {
                        return Err(IglError::EnvConstruction(format!(
                            "tabular kernel covers {} actions, need {num_actions}",
                            rows.len()
                        )));
                    }
                    for row in rows {
                        validate_prob_row(row, "feedback kernel")?;
                    }
                }
                Ok(())
            }
        }
    }
}

fn encoded_digit(action: usize, reward: u8, base: usize, shifts: (i64, i64)) -> usize {
    let shift = if reward == 0 { shifts.0 } else { shifts.1 };
    (action as i64 + shift).rem_euclid(base as i64) as usize
}

fn validate_prob_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(IglError::EnvConstruction(format!(
            "{what} row has a negative or non-finite entry"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(IglError::EnvConstruction(format!(
            "{what} row sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Emit the feedback vector for `(action, reward)`. Deterministic variants
/// ignore the generator; stochastic variants are functions of
/// `(action, reward, rng)` only, never of the context.
pub fn encode_feedback(
    encoder: &FeedbackEncoder,
    action: usize,
    reward: u8,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    debug_assert!(reward <= 1);
    match encoder {
        FeedbackEncoder::PairVector => Ok(vec![action as f64, reward as f64]),
        FeedbackEncoder::DigitOneHot { base, shift0, shift1 } => Ok(one_hot(
            encoded_digit(action, reward, *base, (*shift0, *shift1)),
            *base,
        )),
        FeedbackEncoder::DigitExemplar {
            base,
            shift0,
            shift1,
            pool,
        } => {
            let digit = encoded_digit(action, reward, *base, (*shift0, *shift1));
            draw_exemplar(pool, digit, rng)
        }
        FeedbackEncoder::RewardOneHot => Ok(one_hot(reward as usize, 2)),
        FeedbackEncoder::RewardExemplar { pool } => draw_exemplar(pool, reward as usize, rng),
        FeedbackEncoder::TabularKernel { table } => {
            let row = table
                .get(reward as usize)
                .and_then(|rows| rows.get(action))
                .ok_or_else(|| {
                    IglError::Contract(format!("kernel missing entry for a={action}, r={reward}"))
                })?;
            let dist = WeightedIndex::new(row)
                .map_err(|e| IglError::EnvConstruction(format!("bad kernel row: {e}")))?;
            Ok(one_hot(dist.sample(rng), row.len()))
        }
    }
}

fn draw_exemplar(
    pool: &SupervisedDataset,
    class: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let candidates: Vec<usize> = pool
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class)
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(IglError::EnvConstruction(format!(
            "exemplar pool has no rows of class {class}"
        )));
    }
    let pick = candidates[rng.gen_range(0..candidates.len())];
    Ok(pool.row(pick).to_vec())
}

/// How the latent reward is produced from (context, action).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardRule {
    /// r = 1 exactly when the action equals the row label.
    Deterministic,
    /// Correctness bit flipped with probability `p_flip` in [0, 0.5).
    Noisy { p_flip: f64 },
}

/// A dataset-backed IGL environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IglEnvironment {
    pub dataset: SupervisedDataset,
    pub encoder: FeedbackEncoder,
    pub reward_rule: RewardRule,
    pub behavior_policy: Policy,
}

impl IglEnvironment {
    /// Environment with the uniform behavior policy.
    pub fn new(
        dataset: SupervisedDataset,
        encoder: FeedbackEncoder,
        reward_rule: RewardRule,
    ) -> Result<Self> {
        let behavior = Policy::Uniform {
            num_actions: dataset.num_classes,
        };
        Self::with_behavior(dataset, encoder, reward_rule, behavior)
    }

    pub fn with_behavior(
        dataset: SupervisedDataset,
        encoder: FeedbackEncoder,
        reward_rule: RewardRule,
        behavior_policy: Policy,
    ) -> Result<Self> {
        dataset.validate()?;
        encoder.validate(dataset.num_classes)?;
        if let RewardRule::Noisy { p_flip } = reward_rule {
            if !(0.0..0.5).contains(&p_flip) {
                return Err(IglError::EnvConstruction(format!(
                    "p_flip {p_flip} outside [0, 0.5)"
                )));
            }
        }
        if behavior_policy.num_actions() != dataset.num_classes {
            return Err(IglError::EnvConstruction(
                "behavior policy action count differs from dataset classes".into(),
            ));
        }
        Ok(Self {
            dataset,
            encoder,
            reward_rule,
            behavior_policy,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.dataset.num_classes
    }
}

fn sample_index(probs: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cdf = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cdf += p;
        if u < cdf {
            return i;
        }
    }
    probs.len() - 1
}

/// Simulate `num_steps` interactions. Each step draws a dataset row uniformly,
/// samples the behavior action, realizes the latent reward, and encodes the
/// feedback. Realized rewards travel in the sealed side channel of the
/// returned log, not in the observable records.
pub fn simulate_log(env: &IglEnvironment, num_steps: usize, seed: u64) -> Result<SimulatedLog> {
    if num_steps == 0 {
        return Err(IglError::Contract("num_steps must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n = env.dataset.num_rows();
    let mut interactions = Vec::with_capacity(num_steps);
    let mut rewards = Vec::with_capacity(num_steps);

    for _ in 0..num_steps {
        let row_idx = rng.gen_range(0..n);
        let context = env.dataset.row(row_idx).to_vec();
        let probs = env.behavior_policy.probabilities(&context)?;
        let action = sample_index(&probs, &mut rng);
        let correct = u8::from(action == env.dataset.labels[row_idx]);
        let reward = match env.reward_rule {
            RewardRule::Deterministic => correct,
            RewardRule::Noisy { p_flip } => {
                if rng.gen::<f64>() < p_flip {
                    1 - correct
                } else {
                    correct
                }
            }
        };
        let feedback = encode_feedback(&env.encoder, action, reward, &mut rng)?;
        interactions.push(LoggedInteraction {
            context,
            action,
            feedback,
            propensity: probs[action],
        });
        rewards.push(reward);
    }

    Ok(SimulatedLog {
        interactions,
        true_rewards: TrueRewards(rewards),
    })
}

/// A fully enumerable environment: finite contexts, actions, and feedbacks,
/// with every distribution explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularEnv {
    /// Context distribution, length |X|.
    pub d0: Vec<f64>,
    /// Behavior policy, |X| x K row-stochastic.
    pub mu: Vec<Vec<f64>>,
    /// Expected latent reward, |X| x K in [0, 1].
    pub reward: Vec<Vec<f64>>,
    /// Pr(y | a, r = 0), K x |Y| row-stochastic.
    pub kernel0: Vec<Vec<f64>>,
    /// Pr(y | a, r = 1), K x |Y| row-stochastic.
    pub kernel1: Vec<Vec<f64>>,
}

impl TabularEnv {
    pub fn num_contexts(&self) -> usize {
        self.d0.len()
    }

    pub fn num_actions(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    pub fn num_feedbacks(&self) -> usize {
        self.kernel0.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        validate_prob_row(&self.d0, "d0")?;
        if self.mu.len() != self.num_contexts() || self.reward.len() != self.num_contexts() {
            return Err(IglError::EnvConstruction(
                "mu and reward must have one row per context".into(),
            ));
        }
        for row in &self.mu {
            validate_prob_row(row, "mu")?;
        }
        for row in &self.reward {
            if row.len() != self.num_actions() {
                return Err(IglError::EnvConstruction("reward row width mismatch".into()));
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(IglError::EnvConstruction(
                    "reward entries must lie in [0, 1]".into(),
                ));
            }
        }
        if self.kernel0.len() != self.num_actions() || self.kernel1.len() != self.num_actions() {
            return Err(IglError::EnvConstruction(
                "kernels must have one row per action".into(),
            ));
        }
        for row in self.kernel0.iter().chain(&self.kernel1) {
            if row.len() != self.num_feedbacks() {
                return Err(IglError::EnvConstruction("kernel row width mismatch".into()));
            }
            validate_prob_row(row, "feedback kernel")?;
        }
        Ok(())
    }

    pub fn kernel(&self, reward: u8) -> &Vec<Vec<f64>> {
        if reward == 0 {
            &self.kernel0
        } else {
            &self.kernel1
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let env: Self = serde_json::from_str(s)?;
        env.validate()?;
        Ok(env)
    }
}

/// Simulate a tabular environment; contexts and feedbacks are emitted as
/// one-hot vectors over X and Y so the same learners apply unchanged.
pub fn tabular_simulate(env: &TabularEnv, num_steps: usize, seed: u64) -> Result<SimulatedLog> {
    env.validate()?;
    if num_steps == 0 {
        return Err(IglError::Contract("num_steps must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut interactions = Vec::with_capacity(num_steps);
    let mut rewards = Vec::with_capacity(num_steps);
    for _ in 0..num_steps {
        let x = sample_index(&env.d0, &mut rng);
        let a = sample_index(&env.mu[x], &mut rng);
        let r = u8::from(rng.gen::<f64>() < env.reward[x][a]);
        let y = sample_index(&env.kernel(r)[a], &mut rng);
        interactions.push(LoggedInteraction {
            context: one_hot(x, env.num_contexts()),
            action: a,
            feedback: one_hot(y, env.num_feedbacks()),
            propensity: env.mu[x][a],
        });
        rewards.push(r);
    }
    Ok(SimulatedLog {
        interactions,
        true_rewards: TrueRewards(rewards),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SupervisedDataset;
    use crate::rng::rng_from_seed;

    fn tiny_pool() -> SupervisedDataset {
        // Two rows per class for classes 0 and 1.
        SupervisedDataset::new(
            vec![vec![0.0, 0.1], vec![0.0, 0.2], vec![1.0, 0.1], vec![1.0, 0.2]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap()
    }

    #[test]
    fn digit_one_hot_shift() {
        let enc = FeedbackEncoder::digit_one_hot(10);
        let mut rng = rng_from_seed(0);
        // r=1: (3 + 3) mod 10 = 6; r=0: (3 - 3) mod 10 = 0.
        assert_eq!(encode_feedback(&enc, 3, 1, &mut rng).unwrap(), one_hot(6, 10));
        assert_eq!(encode_feedback(&enc, 3, 0, &mut rng).unwrap(), one_hot(0, 10));
        // Negative shift wraps: a=1, r=0 -> (1 - 3) mod 10 = 8.
        assert_eq!(encode_feedback(&enc, 1, 0, &mut rng).unwrap(), one_hot(8, 10));
    }

    #[test]
    fn pair_vector_is_action_then_reward() {
        let mut rng = rng_from_seed(0);
        assert_eq!(
            encode_feedback(&FeedbackEncoder::PairVector, 2, 1, &mut rng).unwrap(),
            vec![2.0, 1.0]
        );
    }

    #[test]
    fn reward_one_hot() {
        let mut rng = rng_from_seed(0);
        assert_eq!(
            encode_feedback(&FeedbackEncoder::RewardOneHot, 5, 0, &mut rng).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(
            encode_feedback(&FeedbackEncoder::RewardOneHot, 5, 1, &mut rng).unwrap(),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn exemplar_draws_only_from_target_class() {
        let pool = tiny_pool();
        let enc = FeedbackEncoder::RewardExemplar { pool: pool.clone() };
        let mut rng = rng_from_seed(7);
        for _ in 0..50 {
            let y = encode_feedback(&enc, 0, 1, &mut rng).unwrap();
            assert_eq!(y[0], 1.0, "drew a row of the wrong class");
        }
    }

    #[test]
    fn missing_exemplar_class_fails_at_construction() {
        let pool = tiny_pool(); // classes 0 and 1 only
        let enc = FeedbackEncoder::digit_exemplar(10, pool);
        let err = enc.validate(10).unwrap_err();
        assert!(matches!(err, IglError::EnvConstruction(_)));
    }

    fn small_env(encoder: FeedbackEncoder) -> IglEnvironment {
        let ds = SupervisedDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0, 1, 0],
            2,
        )
        .unwrap();
        IglEnvironment::new(ds, encoder, RewardRule::Deterministic).unwrap()
    }

    #[test]
    fn uniform_propensity_is_exact() {
        let env = small_env(FeedbackEncoder::PairVector);
        let log = simulate_log(&env, 100, 1).unwrap();
        for rec in &log.interactions {
            assert_eq!(rec.propensity, 0.5);
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let env = small_env(FeedbackEncoder::PairVector);
        assert_eq!(
            simulate_log(&env, 64, 9).unwrap(),
            simulate_log(&env, 64, 9).unwrap()
        );
    }

    #[test]
    fn single_row_dataset_rewards_match_label() {
        // One usable behaviour: with deterministic rewards, action == label
        // always encodes r = 1.
        let ds = SupervisedDataset::new(vec![vec![0.5], vec![0.5]], vec![0, 0], 2).unwrap();
        let env =
            IglEnvironment::new(ds, FeedbackEncoder::PairVector, RewardRule::Deterministic)
                .unwrap();
        let log = simulate_log(&env, 200, 3).unwrap();
        for (rec, &r) in log.interactions.iter().zip(log.true_rewards.as_slice()) {
            if rec.action == 0 {
                assert_eq!(rec.feedback, vec![0.0, 1.0]);
                assert_eq!(r, 1);
            } else {
                assert_eq!(rec.feedback, vec![1.0, 0.0]);
                assert_eq!(r, 0);
            }
        }
    }

    #[test]
    fn noisy_rule_flips_at_roughly_p() {
        let ds = SupervisedDataset::new(vec![vec![0.5], vec![0.5]], vec![0, 0], 2).unwrap();
        let env = IglEnvironment::new(
            ds,
            FeedbackEncoder::RewardOneHot,
            RewardRule::Noisy { p_flip: 0.25 },
        )
        .unwrap();
        let log = simulate_log(&env, 20_000, 11).unwrap();
        let mut flips = 0usize;
        let mut total = 0usize;
        for (rec, &r) in log.interactions.iter().zip(log.true_rewards.as_slice()) {
            // Label is always 0, so correctness is action == 0.
            let correct = u8::from(rec.action == 0);
            total += 1;
            if r != correct {
                flips += 1;
            }
        }
        let rate = flips as f64 / total as f64;
        assert!((rate - 0.25).abs() < 0.02, "flip rate {rate}");
    }

    fn point_env() -> TabularEnv {
        TabularEnv {
            d0: vec![1.0],
            mu: vec![vec![1.0]],
            reward: vec![vec![1.0]],
            kernel0: vec![vec![1.0, 0.0]],
            kernel1: vec![vec![1.0, 0.0]],
        }
    }

    #[test]
    fn degenerate_tabular_env_is_constant() {
        let env = point_env();
        let log = tabular_simulate(&env, 32, 5).unwrap();
        for rec in &log.interactions {
            assert_eq!(rec.context, vec![1.0]);
            assert_eq!(rec.action, 0);
            assert_eq!(rec.feedback, vec![1.0, 0.0]);
        }
        assert!(log.true_rewards.as_slice().iter().all(|&r| r == 1));
    }

    #[test]
    fn point_mass_context_distribution() {
        let env = TabularEnv {
            d0: vec![0.0, 0.0, 1.0],
            mu: vec![vec![0.5, 0.5]; 3],
            reward: vec![vec![0.0, 1.0]; 3],
            kernel0: vec![vec![1.0, 0.0]; 2],
            kernel1: vec![vec![0.0, 1.0]; 2],
        };
        let log = tabular_simulate(&env, 100, 2).unwrap();
        for rec in &log.interactions {
            assert_eq!(rec.context, vec![0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn tabular_env_json_roundtrip() {
        let env = point_env();
        let json = env.to_json().unwrap();
        assert_eq!(TabularEnv::from_json(&json).unwrap(), env);
    }

    #[test]
    fn invalid_kernel_row_rejected() {
        let mut env = point_env();
        env.kernel0[0] = vec![0.6, 0.6];
        assert!(env.validate().is_err());
    }
}
