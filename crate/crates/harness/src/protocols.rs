//! Evaluation protocols built on the training loop.

use rcrl_core::agents::ConditioningMode;
use rcrl_core::reward::{MixtureConfig, PerturbDistribution};
use serde::Serialize;

use crate::agent::{Agent, Checkpoint};
use crate::config::{AgentKind, ExperimentConfig, PoolSpec};
use crate::error::{config_err, HarnessError, Result};
use crate::runlog::{RunLog, RunRecord};
use crate::setup::Setup;
use crate::stats::normalize_score;
use crate::train::{self, eval_seed, Actor, CollectorSpec, Plan, RunContext, RunOutput, Steering, Streams};

/// Stream ids used while finetuning, disjoint from those of pretraining.
const FINETUNE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub id: usize,
    pub task: String,
    pub behavior: f64,
    pub raw: f64,
    pub normalized: f64,
}

/// Evaluates a checkpoint conditioned on every pool entry in turn, scoring
/// each under its own reward. Parameters are never updated.
pub fn run_zero_shot_sweep(ckpt: &Checkpoint, setup: &mut Setup, episodes: usize, seed: u64) -> Result<Vec<SweepRow>> {
    check_pool(ckpt, setup)?;
    let mut rows = Vec::with_capacity(setup.pool.len());
    for id in 0..setup.pool.len() {
        let ev = train::evaluate(&ckpt.agent, setup, id, episodes, eval_seed(seed))?;
        let raw = ev.mean_return();
        rows.push(SweepRow {
            id,
            task: setup.task_name(id).to_string(),
            behavior: ev.mean_behavior(),
            raw,
            normalized: normalize_score(raw, setup.score_norm(id)?)?,
        });
    }
    Ok(rows)
}

fn check_pool(ckpt: &Checkpoint, setup: &Setup) -> Result<()> {
    if ckpt.env != setup.env {
        return Err(config_err("env", format!("checkpoint was trained on `{}`, not `{}`", ckpt.env, setup.env)));
    }
    if ckpt.pool.entries() != setup.pool.entries() {
        return Err(config_err(
            "mixture.pool",
            format!(
                "checkpoint pool ({} entries) does not match the sweep pool ({} entries)",
                ckpt.pool.len(),
                setup.pool.len()
            ),
        ));
    }
    Ok(())
}

pub fn sweep_log(ctx: &RunContext, rows: &[SweepRow], step: u64) -> Result<RunLog> {
    let mut log = RunLog::new();
    for r in rows {
        log.push(RunRecord {
            experiment: ctx.experiment.clone(),
            variant: ctx.variant.clone(),
            task: r.task.clone(),
            seed: ctx.seed,
            step,
            id: r.id as u64,
            raw: r.raw,
            normalized: r.normalized,
            behavior: r.behavior,
        })?;
    }
    Ok(log)
}

/// Finetunes a pretrained agent on pool entry `target`: fresh optimizer
/// state, conditioning switched to the target, no random warmup, the target
/// as the new nominal. With `continue_rcrl` relabeling keeps the configured
/// mixture, otherwise updates use the target reward only.
pub fn run_finetune_transfer(
    cfg: &ExperimentConfig,
    source: &Setup,
    mut agent: Agent,
    target: usize,
    steps: usize,
    ctx: &RunContext,
) -> Result<RunOutput> {
    if target >= source.pool.len() {
        return Err(config_err(
            "transfer.target",
            format!("id {target} is not in the source pool of {} entries", source.pool.len()),
        ));
    }
    let alpha = if cfg.transfer.continue_rcrl() && agent.conditioned() {
        cfg.mixture.alpha
    } else {
        1.0
    };
    let mut setup = source.retarget(target, alpha)?;
    agent.reset_optimizers();
    let mut plan = Plan::standard(cfg, &setup);
    plan.iterations = steps;
    plan.warmup = 0;
    plan.collectors = vec![CollectorSpec {
        actor: Actor::Learner,
        steering: Steering::Fixed(target),
    }];
    plan.eval_at_zero = true;
    let mut streams = Streams::new(ctx.seed ^ FINETUNE_SALT);
    train::run_plan(ctx, &mut setup, agent, plan, &mut streams)
}

/// Source and target ids of a transfer experiment; every ordered pair when
/// the config leaves them unset.
pub fn transfer_pairs(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<(usize, usize)>> {
    let n = setup.pool.len();
    if !cfg.mixture.pool.is_finite() {
        return Err(config_err("mixture.pool", "transfer needs a finite pool"));
    }
    for (field, id) in [("transfer.source", cfg.transfer.source), ("transfer.target", cfg.transfer.target)] {
        if let Some(id) = id {
            if id >= n {
                return Err(config_err(field, format!("id {id} is not in the pool of {n} entries")));
            }
        }
    }
    let sources: Vec<usize> = cfg.transfer.source.map_or_else(|| (0..n).collect(), |s| vec![s]);
    let targets: Vec<usize> = cfg.transfer.target.map_or_else(|| (0..n).collect(), |t| vec![t]);
    Ok(sources
        .iter()
        .flat_map(|&s| targets.iter().map(move |&t| (s, t)))
        .collect())
}

fn unconditioned(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.conditioning = ConditioningMode::None;
    c.mixture.alpha = 1.0;
    c
}

/// Transfer experiment for one seed. Variants:
/// `rcrl-from-<source>` (conditioned pretraining then finetuning),
/// `unconditioned-from-<source>` (single-task pretraining then finetuning) and
/// `scratch` (conditioned training with the target as nominal from the start).
pub fn run_transfer_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    let base = Setup::new(cfg)?;
    let pairs = transfer_pairs(cfg, &base)?;
    let steps = cfg.transfer.finetune_steps();
    let mut log = RunLog::new();
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    sources.dedup();
    let mut targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    targets.sort_unstable();
    targets.dedup();
    for &s in &sources {
        let mut src = base.retarget(s, cfg.mixture.alpha)?;
        let src_name = src.task_name(s).to_string();
        let rcrl = train::run_training_with(cfg, &mut src, &format!("rcrl-source-{src_name}"), seed)?;
        let plain_cfg = unconditioned(cfg);
        let mut plain_src = base.retarget(s, 1.0)?;
        let plain = train::run_training_with(&plain_cfg, &mut plain_src, &format!("unconditioned-source-{src_name}"), seed)?;
        log.extend(rcrl.log)?;
        log.extend(plain.log)?;
        for &(_, t) in pairs.iter().filter(|p| p.0 == s) {
            let ctx = RunContext::new(cfg, &format!("rcrl-from-{src_name}"), seed);
            log.extend(run_finetune_transfer(cfg, &src, rcrl.agent.clone(), t, steps, &ctx)?.log)?;
            let ctx = RunContext::new(cfg, &format!("unconditioned-from-{src_name}"), seed);
            log.extend(run_finetune_transfer(&plain_cfg, &plain_src, plain.agent.clone(), t, steps, &ctx)?.log)?;
        }
    }
    for t in targets {
        let mut scratch = base.retarget(t, cfg.mixture.alpha)?;
        log.extend(train::run_training_with(cfg, &mut scratch, "scratch", seed)?.log)?;
    }
    Ok(log)
}

pub const REGIMES: [&str; 4] = ["st", "st+rcrl", "st+expanded", "mt"];

/// The four decomposition regimes for one seed, in [`REGIMES`] order.
/// ST and ST+RCRL collect with one environment; ST+expanded and MT collect
/// one transition per task per iteration.
pub fn run_decomposition(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(String, RunOutput)>> {
    let setup = Setup::new(cfg)?;
    let n = setup.pool.len();
    if n < 2 || !cfg.mixture.pool.is_finite() {
        return Err(config_err("mixture.pool", "decomposition needs a finite pool of at least 2 tasks"));
    }
    let nominal = setup.nominal_id();
    let iterations = cfg.decomposition_steps();
    let mut out = Vec::with_capacity(4);
    for regime in REGIMES {
        let mut s = match regime {
            "st" | "st+expanded" => setup.with_alpha(1.0)?,
            _ => setup.clone(),
        };
        let mut streams = Streams::new(seed);
        let agent = Agent::new(cfg, &s, &mut streams.init)?;
        let mut plan = Plan::standard(cfg, &s);
        plan.iterations = iterations;
        let learner = |id| CollectorSpec {
            actor: Actor::Learner,
            steering: Steering::Fixed(id),
        };
        match regime {
            "st+expanded" => {
                let aux = Agent::new(cfg, &s, &mut streams.init)?;
                let aux_mix = MixtureConfig::finite(0.0, setup.pool.clone())?;
                plan.behavior = Some((aux, aux_mix));
                plan.collectors = (0..n)
                    .map(|id| {
                        if id == nominal {
                            learner(id)
                        } else {
                            CollectorSpec {
                                actor: Actor::Behavior,
                                steering: Steering::Fixed(id),
                            }
                        }
                    })
                    .collect();
            }
            "mt" => plan.collectors = (0..n).map(learner).collect(),
            _ => plan.collectors = vec![learner(nominal)],
        }
        let ctx = RunContext::new(cfg, regime, seed);
        out.push((regime.to_string(), train::run_plan(&ctx, &mut s, agent, plan, &mut streams)?));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Alpha,
    Spread,
    Distribution,
    Conditioning,
    Exploration,
    Capacity,
    Multihead,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::Alpha,
        Ablation::Spread,
        Ablation::Distribution,
        Ablation::Conditioning,
        Ablation::Exploration,
        Ablation::Capacity,
        Ablation::Multihead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Alpha => "alpha",
            Ablation::Spread => "spread",
            Ablation::Distribution => "distribution",
            Ablation::Conditioning => "conditioning",
            Ablation::Exploration => "exploration",
            Ablation::Capacity => "capacity",
            Ablation::Multihead => "multihead",
        }
    }
}

pub const ALPHAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const SPREADS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
pub const WIDTHS: [usize; 2] = [32, 128];
pub const POOL_SIZES: [usize; 3] = [4, 16, 64];

fn with_spread(pool: &PoolSpec, s: f64) -> Option<PoolSpec> {
    match pool.clone() {
        PoolSpec::Prc {
            n,
            stratified,
            distribution,
            seed,
            ..
        } => Some(PoolSpec::Prc {
            n,
            spread: s,
            stratified,
            distribution,
            seed,
        }),
        PoolSpec::Continuous {
            stratified, distribution, ..
        } => Some(PoolSpec::Continuous {
            spread: s,
            stratified,
            distribution,
        }),
        PoolSpec::Arc { .. } => None,
    }
}

fn with_distribution(pool: &PoolSpec, d: PerturbDistribution) -> PoolSpec {
    let mut p = pool.clone();
    match &mut p {
        PoolSpec::Prc { distribution, .. } | PoolSpec::Continuous { distribution, .. } => *distribution = d,
        PoolSpec::Arc { .. } => {}
    }
    p
}

/// Labeled configs of an ablation sweep; each is validated.
pub fn ablation_variants(kind: Ablation, cfg: &ExperimentConfig) -> Result<Vec<(String, ExperimentConfig)>> {
    let needs_perturbation = || {
        config_err(
            "mixture.pool",
            format!("the {} ablation needs a prc or continuous pool", kind.name()),
        )
    };
    let needs_ac = || config_err("agent", format!("the {} ablation needs an actor_critic agent", kind.name()));
    let mut out = Vec::new();
    match kind {
        Ablation::Alpha => {
            for a in ALPHAS {
                let mut c = cfg.clone();
                c.mixture.alpha = a;
                out.push((format!("alpha-{a}"), c));
            }
        }
        Ablation::Spread => {
            for s in SPREADS {
                let mut c = cfg.clone();
                c.mixture.pool = with_spread(&cfg.mixture.pool, s).ok_or_else(needs_perturbation)?;
                out.push((format!("spread-{s}"), c));
            }
        }
        Ablation::Distribution => {
            let spec = cfg.mixture.pool.perturb_spec().ok_or_else(needs_perturbation)?;
            // Same log-space standard deviation as the log-uniform law.
            let sigma = spec.log_half_width() / 3f64.sqrt();
            for (name, d) in [
                ("log_uniform", PerturbDistribution::LogUniform),
                ("log_gaussian", PerturbDistribution::LogGaussian { sigma }),
            ] {
                let mut c = cfg.clone();
                c.mixture.pool = with_distribution(&cfg.mixture.pool, d);
                out.push((name.to_string(), c));
            }
        }
        Ablation::Conditioning => {
            for mode in ConditioningMode::ALL {
                let mut c = cfg.clone();
                c.conditioning = mode;
                if c.validate().is_ok() {
                    out.push((mode.name().to_string(), c));
                }
            }
        }
        Ablation::Exploration => {
            for flag in [false, true] {
                let mut c = cfg.clone();
                c.explore_conditioned = flag;
                out.push((if flag { "explore-sampled" } else { "explore-nominal" }.to_string(), c));
            }
        }
        Ablation::Capacity => {
            if cfg.agent != AgentKind::ActorCritic {
                return Err(needs_ac());
            }
            for w in WIDTHS {
                let mut c = cfg.clone();
                c.actor_critic.critic_hidden = vec![w, w];
                c.actor_critic.actor_hidden = vec![w, w];
                out.push((format!("width-{w}"), c));
            }
        }
        Ablation::Multihead => {
            if cfg.agent != AgentKind::ActorCritic {
                return Err(needs_ac());
            }
            let (spread, stratified, distribution, seed) = match cfg.mixture.pool {
                PoolSpec::Prc {
                    spread,
                    stratified,
                    distribution,
                    seed,
                    ..
                } => (spread, stratified, distribution, seed),
                _ => return Err(config_err("mixture.pool", "the multihead ablation needs a prc pool")),
            };
            for size in POOL_SIZES {
                for mode in [ConditioningMode::MultiHead, ConditioningMode::ConcatPsi] {
                    let mut c = cfg.clone();
                    c.conditioning = mode;
                    // The nominal plus `size - 1` perturbations.
                    c.mixture.pool = PoolSpec::Prc {
                        n: size - 1,
                        spread,
                        stratified,
                        distribution,
                        seed,
                    };
                    out.push((format!("{}-pool-{size}", mode.name()), c));
                }
            }
        }
    }
    for (name, c) in &out {
        c.validate()
            .map_err(|e| HarnessError::Config(format!("{} ablation variant `{name}`: {e}", kind.name())))?;
    }
    Ok(out)
}

/// Runs every variant of an ablation for one seed.
pub fn run_ablation(kind: Ablation, cfg: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    let mut log = RunLog::new();
    for (name, c) in ablation_variants(kind, cfg)? {
        let mut setup = Setup::new(&c)?;
        log.extend(train::run_training_with(&c, &mut setup, &name, seed)?.log)?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_and_spread_grids() {
        let mut cfg = ExperimentConfig::for_env("point-mass");
        cfg.agent = AgentKind::ActorCritic;
        cfg.mixture.pool = PoolSpec::Prc {
            n: 8,
            spread: 16.0,
            stratified: true,
            distribution: PerturbDistribution::LogUniform,
            seed: 0,
        };
        let alphas: Vec<f64> = ablation_variants(Ablation::Alpha, &cfg)
            .unwrap()
            .iter()
            .map(|(_, c)| c.mixture.alpha)
            .collect();
        assert_eq!(alphas, ALPHAS);
        let spreads: Vec<f64> = ablation_variants(Ablation::Spread, &cfg)
            .unwrap()
            .iter()
            .map(|(_, c)| c.mixture.pool.perturb_spec().unwrap().spread)
            .collect();
        assert_eq!(spreads, SPREADS);
        let modes: Vec<String> = ablation_variants(Ablation::Conditioning, &cfg)
            .unwrap()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(modes, ["concat_psi", "concat_delta", "embedding", "multi_head", "none"]);
        assert_eq!(ablation_variants(Ablation::Multihead, &cfg).unwrap().len(), 6);
    }

    #[test]
    fn tabular_sweeps_reject_network_knobs() {
        let cfg = ExperimentConfig::for_env("speed-chain");
        assert_eq!(ablation_variants(Ablation::Capacity, &cfg).unwrap_err().exit_code(), 2);
        assert_eq!(ablation_variants(Ablation::Spread, &cfg).unwrap_err().exit_code(), 2);
        let modes: Vec<String> = ablation_variants(Ablation::Conditioning, &cfg)
            .unwrap()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(modes, ["concat_psi", "none"]);
    }

    #[test]
    fn transfer_pairs_cover_the_grid() {
        let mut cfg = ExperimentConfig::for_env("speed-chain");
        let s = Setup::new(&cfg).unwrap();
        assert_eq!(transfer_pairs(&cfg, &s).unwrap().len(), 16);
        cfg.transfer.source = Some(2);
        cfg.transfer.target = Some(3);
        assert_eq!(transfer_pairs(&cfg, &s).unwrap(), vec![(2, 3)]);
        cfg.transfer.target = Some(7);
        assert!(transfer_pairs(&cfg, &s).is_err());
    }
}
