//! The learner behind a run, its reward normalization, and checkpoints.

use std::path::Path;

use rcrl_core::agents::{AcConfig, ActorCritic, Batch, Support, TabularAgent};
use rcrl_core::mdp::{Action, StateVec};
use rcrl_core::replay::Transition;
use rcrl_core::reward::{ParamPool, Parameterization, RewardNormalizer, CONTINUOUS_ID};
use rcrl_core::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, ExperimentConfig, PoolSpec};
use crate::error::{HarnessError, Result};
use crate::setup::Setup;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum Learner {
    Tabular(TabularAgent),
    ActorCritic(Box<ActorCritic>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub learner: Learner,
    pub normalizer: RewardNormalizer,
    /// Applied after per-id normalization; 1 and unused for tabular learners.
    pub reward_scale: f64,
}

impl Agent {
    pub fn new(cfg: &ExperimentConfig, setup: &Setup, rng: &mut Rng) -> Result<Self> {
        let d = &setup.descriptor;
        let pool_size = setup.pool.len();
        match cfg.agent {
            AgentKind::Tabular => {
                let model = rcrl_core::mdp::discrete_model(&setup.env)?;
                let t = &cfg.tabular;
                let learner = TabularAgent::new(
                    model.state_count(),
                    model.action_count(),
                    pool_size,
                    cfg.conditioned(),
                    t.gamma,
                    t.epsilon,
                    t.resolved_learning_rate(cfg.conditioned()),
                )?;
                Ok(Self {
                    learner: Learner::Tabular(learner),
                    normalizer: RewardNormalizer::new(pool_size),
                    reward_scale: 1.0,
                })
            }
            AgentKind::ActorCritic => {
                let a = &cfg.actor_critic;
                let rcrl_core::mdp::ActionSpec::Continuous { dim, low, high } = &d.action_spec else {
                    return Err(HarnessError::Config("actor_critic needs continuous actions".into()));
                };
                let spread = match cfg.mixture.pool {
                    PoolSpec::Prc { spread, .. } | PoolSpec::Continuous { spread, .. } => spread,
                    PoolSpec::Arc { .. } => 16.0,
                };
                let ac = AcConfig {
                    state_dim: d.state_dim,
                    action_dim: *dim,
                    action_low: low[0],
                    action_high: high[0],
                    k: d.component_count,
                    pool_size,
                    mode: cfg.conditioning,
                    spread,
                    critic_hidden: a.critic_hidden.clone(),
                    actor_hidden: a.actor_hidden.clone(),
                    support: Support::new(a.v_min, a.v_max, a.atoms)?,
                    gamma: a.gamma,
                    lr: a.lr,
                    momentum: a.momentum,
                    tau: a.tau,
                    sigma: a.sigma,
                    embed_dim: a.embed_dim,
                };
                Ok(Self {
                    learner: Learner::ActorCritic(Box::new(ActorCritic::new(ac, rng)?)),
                    normalizer: RewardNormalizer::new(pool_size),
                    reward_scale: a.resolved_reward_scale(),
                })
            }
        }
    }

    pub fn act(&self, rng: &mut Rng, s: &StateVec, p: &Parameterization, explore: bool) -> Result<Action> {
        match &self.learner {
            Learner::Tabular(t) => {
                let idx = s
                    .index
                    .ok_or_else(|| HarnessError::Config("tabular agent needs a discrete state".into()))?;
                Ok(Action::Discrete(t.act(rng, idx, p.id, explore)?))
            }
            Learner::ActorCritic(ac) => Ok(Action::Continuous(ac.act(rng, &s.values, p, explore)?)),
        }
    }

    /// One update on a replayed batch relabeled under `params`, with raw
    /// relabeled rewards `rewards`.
    pub fn update(&mut self, batch: &[&Transition], params: Vec<Parameterization>, rewards: Vec<f64>) -> Result<()> {
        match &mut self.learner {
            Learner::Tabular(t) => {
                for ((tr, p), r) in batch.iter().zip(&params).zip(&rewards) {
                    t.update(tr, p.id, *r)?;
                }
            }
            Learner::ActorCritic(ac) => {
                let mut scaled = Vec::with_capacity(rewards.len());
                for (p, r) in params.iter().zip(&rewards) {
                    // Fresh perturbations have no id to keep statistics under.
                    let r = if p.id == CONTINUOUS_ID {
                        *r
                    } else {
                        self.normalizer.normalize(p.id, *r)?
                    };
                    scaled.push(self.reward_scale * r);
                }
                let b = Batch::new(batch, params, scaled)?;
                ac.update(&b)?;
            }
        }
        Ok(())
    }

    /// Fresh optimizer state and step-size schedule; parameters are kept.
    pub fn reset_optimizers(&mut self) {
        match &mut self.learner {
            Learner::Tabular(t) => t.q.reset_schedule(),
            Learner::ActorCritic(ac) => ac.reset_optimizers(),
        }
    }

    pub fn conditioned(&self) -> bool {
        match &self.learner {
            Learner::Tabular(t) => t.conditioned,
            Learner::ActorCritic(ac) => ac.cfg.mode != rcrl_core::agents::ConditioningMode::None,
        }
    }
}

/// A trained agent together with the pool its ids refer to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub env: String,
    pub agent: Agent,
    pub pool: ParamPool,
    /// Side file holding the pool, written next to the checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_file: Option<String>,
}

impl Checkpoint {
    pub fn new(env: &str, agent: Agent, pool: ParamPool) -> Self {
        Self {
            format: CHECKPOINT_FORMAT,
            env: env.into(),
            agent,
            pool,
            pool_file: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(HarnessError::Config(format!("unsupported checkpoint format {}", c.format)));
        }
        if let Learner::ActorCritic(ac) = &c.agent.learner {
            ac.check_shapes()?;
        }
        if c.agent.normalizer.len() != c.pool.len() {
            return Err(HarnessError::Config(format!(
                "checkpoint normalizer covers {} ids but the pool has {}",
                c.agent.normalizer.len(),
                c.pool.len()
            )));
        }
        Ok(c)
    }

    /// Writes the checkpoint and its pool side file `<stem>.pool.json`.
    pub fn save(&mut self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        }
        let pool_path = path.with_extension("pool.json");
        std::fs::write(&pool_path, self.pool.to_json()?).map_err(HarnessError::io(&pool_path))?;
        self.pool_file = pool_path.file_name().map(|n| n.to_string_lossy().into_owned());
        std::fs::write(path, self.to_json()?).map_err(HarnessError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_json(&text)
    }
}
