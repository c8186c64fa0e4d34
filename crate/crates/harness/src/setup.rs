//! Resolves a config into an environment, a pool, a mixture and score references.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rcrl_core::mdp::{self, Action, ActionSpec, EnvDescriptor, Environment, StateVec};
use rcrl_core::oracle;
use rcrl_core::reward::{self, MixtureConfig, ParamPool, Parameterization};
use rcrl_core::Rng;

use crate::config::{ExperimentConfig, PoolSpec};
use crate::error::{config_err, Result};
use crate::stats::ScoreNorm;

/// CEM iterations used for the continuous-environment optimal reference.
pub const CEM_ITERS: usize = 200;
/// Reset seed shared by every reference rollout.
pub const REFERENCE_SEED: u64 = 0;

#[derive(Clone, Debug)]
pub struct Setup {
    pub env: String,
    pub descriptor: EnvDescriptor,
    /// Finite pool; in continuous mode a single nominal entry.
    pub pool: ParamPool,
    pub mixture: MixtureConfig,
    pub names: Vec<String>,
    pub(crate) norms: BTreeMap<usize, ScoreNorm>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let env = cfg.env_name()?.to_string();
        let mut e = mdp::make_env(&env).map_err(|err| config_err("env", err))?;
        let descriptor = e.descriptor().clone();
        let alpha = cfg.mixture.alpha;
        let (pool, mixture) = match &cfg.mixture.pool {
            PoolSpec::Arc { probe_seed } => {
                let pool = reward::make_arc_pool(e.as_mut(), *probe_seed).map_err(|err| config_err("mixture.pool", err))?;
                let mix = MixtureConfig::finite(alpha, pool.clone()).map_err(|err| config_err("mixture", err))?;
                (pool, mix)
            }
            PoolSpec::Prc { n, seed, .. } => {
                let spec = cfg.mixture.pool.perturb_spec().expect("prc has a perturbation spec");
                let pool = reward::make_prc_pool(&descriptor.nominal, *n, &spec, *seed)
                    .map_err(|err| config_err("mixture.pool", err))?;
                let mix = MixtureConfig::finite(alpha, pool.clone()).map_err(|err| config_err("mixture", err))?;
                (pool, mix)
            }
            PoolSpec::Continuous { .. } => {
                let spec = cfg.mixture.pool.perturb_spec().expect("continuous has a perturbation spec");
                let pool = reward::pool_from_deltas(&descriptor.nominal, Vec::new())?;
                let mix = MixtureConfig::continuous(alpha, descriptor.nominal.clone(), spec)
                    .map_err(|err| config_err("mixture", err))?;
                (pool, mix)
            }
        };
        let names = task_names(&descriptor, &pool, &cfg.mixture.pool);
        let mut setup = Self {
            env,
            descriptor,
            pool,
            mixture,
            names,
            norms: BTreeMap::new(),
        };
        if setup.descriptor.discrete {
            for id in 0..setup.pool.len() {
                setup.score_norm(id)?;
            }
        }
        Ok(setup)
    }

    /// Same pool with `id` as the nominal and mixing weight `alpha`.
    pub fn retarget(&self, id: usize, alpha: f64) -> Result<Self> {
        let pool = self.pool.with_nominal(id).map_err(|e| config_err("transfer.target", e))?;
        let mixture = match &self.mixture.alternatives {
            reward::Alternatives::Pool(_) => MixtureConfig::finite(alpha, pool.clone()),
            reward::Alternatives::Continuous { nominal, spec } => MixtureConfig::continuous(alpha, nominal.clone(), *spec),
        }
        .map_err(|e| config_err("mixture", e))?;
        Ok(Self {
            pool,
            mixture,
            ..self.clone()
        })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        self.retarget(self.pool.nominal_id(), alpha)
    }

    pub fn nominal_id(&self) -> usize {
        self.pool.nominal_id()
    }

    pub fn task_name(&self, id: usize) -> &str {
        self.names.get(id).map(String::as_str).unwrap_or("unknown")
    }

    pub fn param(&self, id: usize) -> Result<&Parameterization> {
        Ok(self.pool.get(id)?)
    }

    pub fn make_env(&self) -> Result<Box<dyn Environment>> {
        Ok(mdp::make_env(&self.env)?)
    }

    /// Random and optimal reference returns of pool entry `id`, computed once.
    pub fn score_norm(&mut self, id: usize) -> Result<ScoreNorm> {
        if let Some(n) = self.norms.get(&id) {
            return Ok(*n);
        }
        let p = self.pool.get(id)?.clone();
        let norm = reference_norm(&self.env, &self.descriptor, &p)?;
        self.norms.insert(id, norm);
        Ok(norm)
    }
}

/// Exact references on discrete environments; on continuous ones a
/// Monte-Carlo uniform policy and the CEM open-loop search.
pub fn reference_norm(env: &str, d: &EnvDescriptor, p: &Parameterization) -> Result<ScoreNorm> {
    if d.discrete {
        let model = mdp::discrete_model(env)?;
        let n = model.action_count();
        let uniform = vec![1.0 / n as f64; n];
        let random = oracle::policy_return(model.as_ref(), p, d.horizon, &|_| uniform.clone())?;
        let optimal = oracle::optimal_return(model.as_ref(), p, d.horizon)?;
        return ScoreNorm::new(random, optimal);
    }
    let mut e = mdp::make_env(env)?;
    let mut rng = Rng::seed_from_u64(REFERENCE_SEED);
    let spec = d.action_spec.clone();
    let mut policy = |_: &StateVec| Ok(random_action(&mut rng, &spec));
    let random = oracle::evaluate_policy(e.as_mut(), &mut policy, p, 10, REFERENCE_SEED)?.mean_return();
    let optimal = oracle::best_openloop_return(e.as_mut(), p, CEM_ITERS, REFERENCE_SEED)?;
    ScoreNorm::new(random, optimal.max(random + f64::EPSILON))
}

pub fn random_action<R: rand::Rng + ?Sized>(rng: &mut R, spec: &ActionSpec) -> Action {
    match spec {
        ActionSpec::Discrete(n) => Action::Discrete(rng.random_range(0..*n)),
        ActionSpec::Continuous { low, high, .. } => {
            Action::Continuous(low.iter().zip(high).map(|(l, h)| rng.random_range(*l..=*h)).collect())
        }
    }
}

fn task_names(d: &EnvDescriptor, pool: &ParamPool, spec: &PoolSpec) -> Vec<String> {
    pool.iter()
        .map(|p| {
            if p.id == pool.nominal_id() && !matches!(spec, PoolSpec::Arc { .. }) {
                return "nominal".to_string();
            }
            match spec {
                PoolSpec::Arc { .. } => d
                    .tasks
                    .iter()
                    .find(|(_, t)| t.psi == p.psi && t.composition == p.composition)
                    .map(|(n, _)| n.clone())
                    .unwrap_or_else(|| "nominal".into()),
                _ => format!("prc-{}", p.id),
            }
        })
        .collect()
}
