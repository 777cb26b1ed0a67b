//! Interaction-grounded learning (IGL) with action-inclusive feedback.
//!
//! An IGL learner observes a context, takes an action, and receives a feedback
//! vector — never an explicit reward. This crate simulates such environments
//! from supervised classification datasets, recovers the latent binary reward
//! with a per-action contrastive objective plus a symmetry-breaking step, and
//! reduces the decoded problem to an offline contextual-bandit oracle.
//!
//! The crate is organized around a few moving parts:
//!
//! - [`data`]: CSV ingestion, standardization, balance checks, train/eval splits.
//! - [`env`]: feedback encoders and simulators (dataset-backed and fully tabular).
//! - [`contrastive`]: per-action latent reward discovery and symmetry breaking.
//! - [`cb`]: the offline contextual-bandit oracle and policy evaluation.
//! - [`baselines`]: the true-reward skyline and the full-conditional-independence
//!   baseline it is compared against.
//! - [`oracle`]: exact enumeration of every analytic quantity on finite
//!   environments, used to cross-check the learners.
//! - [`metafeatures`]: dataset meta-properties that predict relative performance.
//! - [`experiment`]: seeded multi-trial comparison harness with JSON/CSV reports.

pub mod baselines;
pub mod cb;
pub mod contrastive;
pub mod data;
pub mod env;
pub mod error;
pub mod experiment;
pub mod metafeatures;
pub mod oracle;
pub mod policy;
pub mod records;
pub mod rng;
pub mod scorer;
pub mod synth;

pub use error::IglError;
pub use policy::Policy;
pub use records::{ConditionalMeans, DecodedInteraction, LoggedInteraction, SimulatedLog};
pub use scorer::{InputKind, LinearScorer};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, IglError>;
