//! The collect, relabel and update loop.

use rand::{Rng as _, SeedableRng};
use rcrl_core::mdp::{Environment, StateVec};
use rcrl_core::oracle::{self, Evaluation};
use rcrl_core::replay::{ReplayBuffer, Transition};
use rcrl_core::reward::{self, MixtureConfig, Parameterization};
use rcrl_core::Rng;

use crate::agent::Agent;
use crate::config::{AgentKind, ExperimentConfig};
use crate::error::Result;
use crate::runlog::{RunLog, RunRecord};
use crate::setup::{self, Setup};
use crate::stats::normalize_score;

const STREAM_ENV: u64 = 0;
const STREAM_EXPLORE: u64 = 1;
const STREAM_REPLAY: u64 = 2;
const STREAM_MIXTURE: u64 = 3;
const STREAM_INIT: u64 = 4;
const EVAL_SEED_BASE: u64 = 1 << 40;

/// Independent random streams of one run.
pub struct Streams {
    pub env: Rng,
    pub explore: Rng,
    pub replay: Rng,
    pub mixture: Rng,
    pub init: Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            env: stream(seed, STREAM_ENV),
            explore: stream(seed, STREAM_EXPLORE),
            replay: stream(seed, STREAM_REPLAY),
            mixture: stream(seed, STREAM_MIXTURE),
            init: stream(seed, STREAM_INIT),
        }
    }
}

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut r = Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Reset seed of the first evaluation episode; fixed per run seed so every
/// evaluation point of a run sees the same starts.
pub fn eval_seed(seed: u64) -> u64 {
    EVAL_SEED_BASE.wrapping_add(seed.wrapping_mul(1000))
}

/// Labels and evaluation settings shared by the records of one run.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub experiment: String,
    pub variant: String,
    pub seed: u64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl RunContext {
    pub fn new(cfg: &ExperimentConfig, variant: &str, seed: u64) -> Self {
        Self {
            experiment: cfg.name.clone(),
            variant: variant.into(),
            seed,
            eval_interval: cfg.eval_interval,
            eval_episodes: cfg.eval_episodes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Actor {
    Learner,
    /// The auxiliary agent that only widens coverage.
    Behavior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Steering {
    Fixed(usize),
    /// A fresh draw from the learner's mixture at every episode start.
    PerEpisode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollectorSpec {
    pub actor: Actor,
    pub steering: Steering,
}

/// Everything a run does besides the labels.
pub struct Plan {
    pub iterations: usize,
    /// Leading iterations where collectors act uniformly at random.
    pub warmup: usize,
    pub batch: usize,
    pub capacity: usize,
    pub collectors: Vec<CollectorSpec>,
    pub mixture: MixtureConfig,
    /// Auxiliary agent and the mixture it learns under.
    pub behavior: Option<(Agent, MixtureConfig)>,
    pub eval_at_zero: bool,
    pub eval_ids: Vec<usize>,
}

impl Plan {
    /// One collector under the nominal (or per-episode samples) and the
    /// learner updated under the setup's mixture.
    pub fn standard(cfg: &ExperimentConfig, setup: &Setup) -> Self {
        let (warmup, batch, capacity) = match cfg.agent {
            AgentKind::Tabular => (cfg.tabular.warmup, cfg.tabular.batch, cfg.tabular.capacity),
            AgentKind::ActorCritic => (
                cfg.actor_critic.warmup,
                cfg.actor_critic.batch,
                cfg.actor_critic.capacity,
            ),
        };
        let steering = if cfg.explore_conditioned {
            Steering::PerEpisode
        } else {
            Steering::Fixed(setup.nominal_id())
        };
        Self {
            iterations: cfg.steps,
            warmup,
            batch,
            capacity,
            collectors: vec![CollectorSpec {
                actor: Actor::Learner,
                steering,
            }],
            mixture: setup.mixture.clone(),
            behavior: None,
            eval_at_zero: false,
            eval_ids: vec![setup.nominal_id()],
        }
    }
}

pub struct RunOutput {
    pub log: RunLog,
    pub agent: Agent,
    pub env_steps: u64,
}

struct Collector {
    env: Box<dyn Environment>,
    state: StateVec,
    spec: CollectorSpec,
    current: Parameterization,
}

/// Trains a fresh agent on `cfg` with `seed`, logging nominal evaluations.
pub fn run_training(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let mut setup = Setup::new(cfg)?;
    run_training_with(cfg, &mut setup, "rcrl", seed)
}

pub fn run_training_with(cfg: &ExperimentConfig, setup: &mut Setup, variant: &str, seed: u64) -> Result<RunOutput> {
    let mut streams = Streams::new(seed);
    let agent = Agent::new(cfg, setup, &mut streams.init)?;
    let plan = Plan::standard(cfg, setup);
    run_plan(&RunContext::new(cfg, variant, seed), setup, agent, plan, &mut streams)
}

pub fn run_plan(ctx: &RunContext, setup: &mut Setup, mut agent: Agent, plan: Plan, streams: &mut Streams) -> Result<RunOutput> {
    let k = setup.descriptor.component_count;
    let mut buffer = ReplayBuffer::new(plan.capacity, k)?;
    let mut behavior = plan.behavior;
    let mut collectors = Vec::with_capacity(plan.collectors.len());
    for spec in &plan.collectors {
        let mut env = setup.make_env()?;
        let state = env.reset(streams.env.random());
        let current = steer(spec.steering, setup, &plan.mixture, &mut streams.explore)?;
        collectors.push(Collector {
            env,
            state,
            spec: *spec,
            current,
        });
    }
    let mut log = RunLog::new();
    if plan.eval_at_zero {
        record_evals(ctx, setup, &agent, &plan.eval_ids, 0, &mut log)?;
    }
    let mut env_steps = 0u64;
    for it in 0..plan.iterations {
        for c in collectors.iter_mut() {
            let action = if it < plan.warmup {
                setup::random_action(&mut streams.explore, &setup.descriptor.action_spec)
            } else {
                let actor = match c.spec.actor {
                    Actor::Learner => &agent,
                    Actor::Behavior => &behavior.as_ref().expect("behavior collectors need a behavior agent").0,
                };
                actor.act(&mut streams.explore, &c.state, &c.current, true)?
            };
            let step = c.env.step(&action)?;
            env_steps += 1;
            let next = step.next_state.clone();
            buffer.push(Transition {
                state: std::mem::replace(&mut c.state, next),
                action,
                components: step.components,
                next_state: step.next_state,
                done: step.done,
            })?;
            if step.done || step.truncated {
                c.state = c.env.reset(streams.env.random());
                if c.spec.steering == Steering::PerEpisode {
                    c.current = steer(c.spec.steering, setup, &plan.mixture, &mut streams.explore)?;
                }
            }
        }
        if buffer.len() >= plan.batch {
            learn(&mut agent, &buffer, &plan.mixture, plan.batch, streams)?;
            if let Some((b, mix)) = behavior.as_mut() {
                learn(b, &buffer, mix, plan.batch, streams)?;
            }
        }
        let done = it + 1;
        if done % ctx.eval_interval == 0 || done == plan.iterations {
            record_evals(ctx, setup, &agent, &plan.eval_ids, done as u64, &mut log)?;
        }
    }
    Ok(RunOutput { log, agent, env_steps })
}

fn steer(s: Steering, setup: &Setup, mixture: &MixtureConfig, rng: &mut Rng) -> Result<Parameterization> {
    match s {
        Steering::Fixed(id) => Ok(setup.param(id)?.clone()),
        Steering::PerEpisode => Ok(reward::sample_mixture(rng, mixture, 1)?.remove(0)),
    }
}

fn learn(agent: &mut Agent, buffer: &ReplayBuffer, mixture: &MixtureConfig, batch: usize, streams: &mut Streams) -> Result<()> {
    let transitions = buffer.sample_batch(&mut streams.replay, batch)?;
    let params = reward::sample_mixture(&mut streams.mixture, mixture, batch)?;
    let rewards = transitions
        .iter()
        .zip(&params)
        .map(|(t, p)| reward::compose(p, t.components.as_slice()))
        .collect::<rcrl_core::Result<Vec<f64>>>()?;
    agent.update(&transitions, params, rewards)
}

/// Greedy rollouts conditioned on pool entry `id`, scored under that entry.
pub fn evaluate(agent: &Agent, setup: &Setup, id: usize, episodes: usize, seed: u64) -> Result<Evaluation> {
    let p = setup.param(id)?.clone();
    let mut env = setup.make_env()?;
    let mut quiet = Rng::seed_from_u64(0);
    let mut policy = |s: &StateVec| agent.act(&mut quiet, s, &p, false).map_err(to_core);
    Ok(oracle::evaluate_policy(env.as_mut(), &mut policy, &p, episodes, seed)?)
}

fn to_core(e: crate::error::HarnessError) -> rcrl_core::Error {
    match e {
        crate::error::HarnessError::Core(c) => c,
        other => rcrl_core::Error::Parse(other.to_string()),
    }
}

pub fn eval_record(ctx: &RunContext, setup: &mut Setup, agent: &Agent, id: usize, step: u64) -> Result<RunRecord> {
    let ev = evaluate(agent, setup, id, ctx.eval_episodes, eval_seed(ctx.seed))?;
    let raw = ev.mean_return();
    Ok(RunRecord {
        experiment: ctx.experiment.clone(),
        variant: ctx.variant.clone(),
        task: setup.task_name(id).to_string(),
        seed: ctx.seed,
        step,
        id: id as u64,
        raw,
        normalized: normalize_score(raw, setup.score_norm(id)?)?,
        behavior: ev.mean_behavior(),
    })
}

fn record_evals(ctx: &RunContext, setup: &mut Setup, agent: &Agent, ids: &[usize], step: u64, log: &mut RunLog) -> Result<()> {
    for &id in ids {
        let r = eval_record(ctx, setup, agent, id, step)?;
        log.push(r)?;
    }
    Ok(())
}
