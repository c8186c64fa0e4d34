//! Plain single-task training with no mixture and no relabeling, used as the
//! reference the conditioned loop must reduce to.

use rand::Rng as _;
use rcrl_core::agents::ConditioningMode;
use rcrl_core::replay::{ReplayBuffer, Transition};
use rcrl_core::reward::{compose, ParamPool};

use crate::agent::Agent;
use crate::config::{AgentKind, ExperimentConfig};
use crate::error::Result;
use crate::runlog::RunLog;
use crate::setup::{self, Setup};
use crate::train::{eval_record, RunContext, RunOutput, Streams};

/// Trains an unconditioned agent on the environment's nominal reward. The
/// setup is only used to name and score evaluations.
pub fn run_baseline(cfg: &ExperimentConfig, setup: &mut Setup, variant: &str, seed: u64) -> Result<RunOutput> {
    let ctx = RunContext::new(cfg, variant, seed);
    let mut streams = Streams::new(seed);
    let nominal = setup.descriptor.nominal.clone();
    let single = Setup {
        pool: ParamPool::single(nominal.clone())?,
        ..setup.clone()
    };
    let plain = ExperimentConfig {
        conditioning: ConditioningMode::None,
        ..cfg.clone()
    };
    let mut agent = Agent::new(&plain, &single, &mut streams.init)?;
    let (warmup, batch, capacity) = match cfg.agent {
        AgentKind::Tabular => (cfg.tabular.warmup, cfg.tabular.batch, cfg.tabular.capacity),
        AgentKind::ActorCritic => (cfg.actor_critic.warmup, cfg.actor_critic.batch, cfg.actor_critic.capacity),
    };
    let mut env = setup.make_env()?;
    let mut buffer = ReplayBuffer::new(capacity, setup.descriptor.component_count)?;
    let mut state = env.reset(streams.env.random());
    let mut log = RunLog::new();
    let nominal_id = setup.nominal_id();
    for it in 0..cfg.steps {
        let action = if it < warmup {
            setup::random_action(&mut streams.explore, &setup.descriptor.action_spec)
        } else {
            agent.act(&mut streams.explore, &state, &nominal, true)?
        };
        let step = env.step(&action)?;
        let next = if step.done || step.truncated {
            env.reset(streams.env.random())
        } else {
            step.next_state.clone()
        };
        buffer.push(Transition {
            state: std::mem::replace(&mut state, next),
            action,
            components: step.components,
            next_state: step.next_state,
            done: step.done,
        })?;
        if buffer.len() >= batch {
            let transitions = buffer.sample_batch(&mut streams.replay, batch)?;
            let rewards = transitions
                .iter()
                .map(|t| compose(&nominal, t.components.as_slice()))
                .collect::<rcrl_core::Result<Vec<f64>>>()?;
            agent.update(&transitions, vec![nominal.clone(); batch], rewards)?;
        }
        let done = it + 1;
        if done % cfg.eval_interval == 0 || done == cfg.steps {
            log.push(eval_record(&ctx, setup, &agent, nominal_id, done as u64)?)?;
        }
    }
    Ok(RunOutput {
        log,
        agent,
        env_steps: cfg.steps as u64,
    })
}
