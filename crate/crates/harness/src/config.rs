//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use rcrl_core::agents::{ConditioningMode, LearningRate};
use rcrl_core::mdp::{self, ENV_NAMES};
use rcrl_core::reward::{PerturbDistribution, PerturbSpec};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, HarnessError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Tabular,
    ActorCritic,
}

/// Where the alternative parameterizations come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoolSpec {
    /// The environment's task rewards, deduplicated on a random probe.
    Arc {
        #[serde(default)]
        probe_seed: u64,
    },
    /// `n` fixed perturbations of the nominal plus the nominal itself.
    Prc {
        #[serde(default = "default_pool_n")]
        n: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "yes")]
        stratified: bool,
        #[serde(default = "default_distribution")]
        distribution: PerturbDistribution,
        #[serde(default)]
        seed: u64,
    },
    /// A fresh perturbation for every relabeled transition.
    Continuous {
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "yes")]
        stratified: bool,
        #[serde(default = "default_distribution")]
        distribution: PerturbDistribution,
    },
}

fn default_pool_n() -> usize {
    1024
}
fn default_spread() -> f64 {
    16.0
}
fn yes() -> bool {
    true
}
fn default_distribution() -> PerturbDistribution {
    PerturbDistribution::LogUniform
}

impl PoolSpec {
    pub fn perturb_spec(&self) -> Option<PerturbSpec> {
        match *self {
            PoolSpec::Arc { .. } => None,
            PoolSpec::Prc {
                spread,
                stratified,
                distribution,
                ..
            }
            | PoolSpec::Continuous {
                spread,
                stratified,
                distribution,
            } => Some(PerturbSpec {
                spread,
                stratified,
                distribution,
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, PoolSpec::Continuous { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub alpha: f64,
    pub pool: PoolSpec,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            pool: PoolSpec::Arc { probe_seed: 0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularSettings {
    pub gamma: f64,
    pub epsilon: f64,
    pub batch: usize,
    /// Leading environment steps taken with uniformly random actions.
    pub warmup: usize,
    pub capacity: usize,
    /// Unset: constant 1 with conditioning, `n^-0.8` without.
    pub learning_rate: Option<LearningRate>,
}

impl Default for TabularSettings {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            epsilon: 0.2,
            batch: 64,
            warmup: 5000,
            capacity: 100_000,
            learning_rate: None,
        }
    }
}

impl TabularSettings {
    pub fn resolved_learning_rate(&self, conditioned: bool) -> LearningRate {
        self.learning_rate.unwrap_or(if conditioned {
            LearningRate::Constant { value: 1.0 }
        } else {
            LearningRate::Polynomial { power: 0.8 }
        })
    }
}

/// Normalized rewards can reach ~15 when their spread is small early on; this
/// keeps the discounted value of such a stream inside a ±5 support.
pub const REWARD_SCALE_FACTOR: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcSettings {
    pub batch: usize,
    pub warmup: usize,
    pub capacity: usize,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub gamma: f64,
    pub lr: f64,
    pub momentum: f64,
    pub tau: f64,
    pub sigma: f64,
    pub embed_dim: usize,
    /// Multiplier applied after per-id normalization; unset means
    /// `REWARD_SCALE_FACTOR · (1 − gamma)`.
    pub reward_scale: Option<f64>,
}

impl Default for AcSettings {
    fn default() -> Self {
        Self {
            batch: 64,
            warmup: 1000,
            capacity: 100_000,
            critic_hidden: vec![128, 128],
            actor_hidden: vec![64, 64],
            atoms: 51,
            v_min: -5.0,
            v_max: 5.0,
            gamma: 0.9,
            lr: 1e-3,
            momentum: 0.9,
            tau: 0.005,
            sigma: 0.2,
            embed_dim: 8,
            reward_scale: None,
        }
    }
}

impl AcSettings {
    pub fn resolved_reward_scale(&self) -> f64 {
        self.reward_scale.unwrap_or(REWARD_SCALE_FACTOR * (1.0 - self.gamma))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSettings {
    /// Pool id used as the nominal while pretraining.
    pub source: Option<usize>,
    /// Pool id finetuned on.
    pub target: Option<usize>,
    pub finetune_steps: Option<usize>,
    /// Keep relabeling during finetuning, with the target as nominal.
    pub continue_rcrl: Option<bool>,
}

impl TransferSettings {
    pub fn finetune_steps(&self) -> usize {
        self.finetune_steps.unwrap_or(50_000)
    }

    pub fn continue_rcrl(&self) -> bool {
        self.continue_rcrl.unwrap_or(true)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionSettings {
    /// Iterations per regime; unset means `steps`.
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: Option<String>,
    pub agent: AgentKind,
    pub conditioning: ConditioningMode,
    pub mixture: MixtureSpec,
    pub steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Act under a per-episode sample from the mixture instead of the nominal.
    pub explore_conditioned: bool,
    pub out: Option<PathBuf>,
    pub tabular: TabularSettings,
    pub actor_critic: AcSettings,
    pub transfer: TransferSettings,
    pub decomposition: DecompositionSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            env: None,
            agent: AgentKind::Tabular,
            conditioning: ConditioningMode::ConcatPsi,
            mixture: MixtureSpec::default(),
            steps: 200_000,
            eval_interval: 20_000,
            eval_episodes: 10,
            seeds: (0..10).collect(),
            explore_conditioned: false,
            out: None,
            tabular: TabularSettings::default(),
            actor_critic: AcSettings::default(),
            transfer: TransferSettings::default(),
            decomposition: DecompositionSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_env(env: &str) -> Self {
        Self {
            env: Some(env.into()),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn env_name(&self) -> Result<&str> {
        self.env
            .as_deref()
            .ok_or_else(|| config_err("env", format!("missing; expected one of {}", ENV_NAMES.join(", "))))
    }

    pub fn conditioned(&self) -> bool {
        self.conditioning != ConditioningMode::None
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.env_name()?;
        let desc = mdp::descriptor(env)
            .map_err(|_| config_err("env", format!("unknown `{env}`; expected one of {}", ENV_NAMES.join(", "))))?;
        if !(0.0..=1.0).contains(&self.mixture.alpha) {
            return Err(config_err("mixture.alpha", format!("{} is outside [0, 1]", self.mixture.alpha)));
        }
        if let Some(spec) = self.mixture.pool.perturb_spec() {
            spec.validate().map_err(|e| config_err("mixture.pool", e))?;
        }
        if matches!(self.mixture.pool, PoolSpec::Arc { .. }) && desc.tasks.len() < 2 {
            return Err(config_err(
                "mixture.pool",
                format!("`{env}` declares no task rewards; use a prc or continuous pool"),
            ));
        }
        if let PoolSpec::Prc { n: 0, .. } = self.mixture.pool {
            return Err(config_err("mixture.pool.n", "must be at least 1"));
        }
        if self.steps == 0 {
            return Err(config_err("steps", "must be positive"));
        }
        if self.eval_interval == 0 {
            return Err(config_err("eval_interval", "must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(config_err("eval_episodes", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "needs at least one seed"));
        }
        let mode = self.conditioning;
        match self.agent {
            AgentKind::Tabular => {
                if !desc.discrete {
                    return Err(config_err("agent", format!("tabular agents need a discrete environment, `{env}` is continuous")));
                }
                if !matches!(mode, ConditioningMode::ConcatPsi | ConditioningMode::None) {
                    return Err(config_err(
                        "conditioning",
                        "tabular agents index their table by pool id; use concat_psi or none",
                    ));
                }
                if !self.mixture.pool.is_finite() {
                    return Err(config_err("mixture.pool", "tabular agents need a finite pool"));
                }
                let t = &self.tabular;
                if !(0.0..1.0).contains(&t.gamma) {
                    return Err(config_err("tabular.gamma", "must lie in [0, 1)"));
                }
                if !(0.0..=1.0).contains(&t.epsilon) {
                    return Err(config_err("tabular.epsilon", "must lie in [0, 1]"));
                }
                if t.batch == 0 || t.capacity == 0 {
                    return Err(config_err("tabular.batch", "batch and capacity must be positive"));
                }
            }
            AgentKind::ActorCritic => {
                if desc.discrete {
                    return Err(config_err(
                        "agent",
                        format!("actor_critic needs a continuous environment, `{env}` is discrete"),
                    ));
                }
                if mode.needs_ids() && !self.mixture.pool.is_finite() {
                    return Err(config_err("conditioning", format!("{} needs a finite pool", mode.name())));
                }
                if mode == ConditioningMode::ConcatDelta && matches!(self.mixture.pool, PoolSpec::Arc { .. }) {
                    return Err(config_err("conditioning", "concat_delta needs a perturbation pool"));
                }
                let a = &self.actor_critic;
                if a.batch == 0 || a.capacity == 0 {
                    return Err(config_err("actor_critic.batch", "batch and capacity must be positive"));
                }
                if a.critic_hidden.is_empty() || a.actor_hidden.is_empty() {
                    return Err(config_err("actor_critic.critic_hidden", "networks need at least one hidden layer"));
                }
                if !(0.0..1.0).contains(&a.gamma) {
                    return Err(config_err("actor_critic.gamma", "must lie in [0, 1)"));
                }
                if !(a.resolved_reward_scale() > 0.0) {
                    return Err(config_err("actor_critic.reward_scale", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Iteration count used by the decomposition regimes.
    pub fn decomposition_steps(&self) -> usize {
        self.decomposition.steps.unwrap_or(self.steps)
    }
}
