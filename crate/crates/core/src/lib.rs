//! Reward-conditioned reinforcement learning at desk scale.
//!
//! Environments emit reward *components*; a [`reward::Parameterization`]
//! folds them into a scalar. Experience is collected under one nominal
//! parameterization, stored as components in [`replay::ReplayBuffer`], and
//! relabeled under parameterizations drawn from a [`reward::MixtureConfig`]
//! when replayed. Learners in [`agents`] condition on the parameterization
//! they are updated with; [`oracle`] provides the exact references they are
//! tested against.

pub mod agents;
pub mod error;
pub mod mdp;
pub mod oracle;
pub mod replay;
pub mod reward;

pub use error::{Error, Result};

/// RNG used throughout for reproducible runs.
pub type Rng = rand_chacha::ChaCha8Rng;
