//! Learners: a tabular Q-table over pool ids and a dense actor-critic.

pub mod actor_critic;
pub mod categorical;
pub mod conditioning;
pub mod nn;
pub mod tabular;

pub use actor_critic::{AcConfig, ActorCritic, Batch, CriticGrads};
pub use categorical::Support;
pub use conditioning::{condition_input, ConditioningMode, EmbeddingTable};
pub use nn::{DenseNet, Momentum, Params};
pub use tabular::{LearningRate, TabularAgent, TabularQ};
