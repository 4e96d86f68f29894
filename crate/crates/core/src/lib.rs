//! Generalized linear bandits with delayed, stochastic reward feedback.
//!
//! The learner picks an arm from a fresh decision set each round; its reward
//! arrives after a random delay. [`policy::Policy`] keeps a confidence
//! ellipsoid built only from rewards that have arrived and plays the arm with
//! the highest optimistic mean.

pub mod confidence;
pub mod design;
pub mod env;
pub mod glm;
pub mod linalg;
pub mod policy;
pub mod sim;
pub mod verify;

pub use confidence::{beta_width, membership, optimistic_index, ConfidenceSet};
pub use design::{DesignError, DesignState};
pub use env::{DelayModel, DeliveryQueue, EnvError, EnvironmentConfig, ThetaSource};
pub use glm::{
    fit_penalized_mle, GlmError, GlmModel, LinkFunction, LinkKind, Samples, SolverOptions,
};
pub use policy::{Policy, PolicyConfig, PolicyError, PolicyKind};
pub use sim::{run_episode, run_episode_with, RoundRecord, SimError, Trace};
pub use verify::LemmaReport;
