//! Exact and brute-force references for the learners.
//!
//! Learning targets are discounted ([`value_iteration`]); evaluation returns
//! are undiscounted sums over the episode horizon ([`evaluate_policy`],
//! [`optimal_return`], [`policy_return`]).

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::mdp::{Action, ActionSpec, DiscreteModel, Environment, StateVec};
use crate::reward::{compose, Parameterization};

/// Default sup-norm tolerance for value iteration.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Optimal action values for one parameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactQ {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Final Bellman residual `||TQ - Q||_inf`.
    pub residual: f64,
    q: Vec<f64>,
}

impl ExactQ {
    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    /// `state,action,q` rows in enumeration order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,action,q\n");
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                writeln!(out, "{s},{a},{}", self.value(s, a)).expect("write to string");
            }
        }
        out
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct Table {
    n_states: usize,
    n_actions: usize,
    next: Vec<usize>,
    reward: Vec<f64>,
    done: Vec<bool>,
}

fn tabulate(model: &dyn DiscreteModel, reward: &dyn Fn(&[f64]) -> Result<f64>) -> Result<Table> {
    let (n_states, n_actions) = (model.state_count(), model.action_count());
    let mut t = Table {
        n_states,
        n_actions,
        next: Vec::with_capacity(n_states * n_actions),
        reward: Vec::with_capacity(n_states * n_actions),
        done: Vec::with_capacity(n_states * n_actions),
    };
    for s in 0..n_states {
        for a in 0..n_actions {
            let out = model.transition(s, a)?;
            t.next.push(out.next);
            t.reward.push(reward(&out.components)?);
            t.done.push(out.done);
        }
    }
    Ok(t)
}

/// `Q*` for the reward `compose(p, ·)`.
pub fn value_iteration(
    model: &dyn DiscreteModel,
    p: &Parameterization,
    gamma: f64,
    tol: f64,
) -> Result<ExactQ> {
    value_iteration_with(model, &|c| compose(p, c), gamma, tol)
}

/// `Q*` for an arbitrary function of the component vector.
pub fn value_iteration_with(
    model: &dyn DiscreteModel,
    reward: &dyn Fn(&[f64]) -> Result<f64>,
    gamma: f64,
    tol: f64,
) -> Result<ExactQ> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let t = tabulate(model, reward)?;
    let mut q = vec![0.0; t.n_states * t.n_actions];
    let mut v = vec![0.0; t.n_states];
    loop {
        for s in 0..t.n_states {
            v[s] = q[s * t.n_actions..(s + 1) * t.n_actions]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let mut residual: f64 = 0.0;
        for i in 0..q.len() {
            let boot = if t.done[i] { 0.0 } else { v[t.next[i]] };
            let target = t.reward[i] + gamma * boot;
            residual = residual.max((target - q[i]).abs());
            q[i] = target;
        }
        if residual < tol {
            return Ok(ExactQ {
                n_states: t.n_states,
                n_actions: t.n_actions,
                gamma,
                residual,
                q,
            });
        }
    }
}

/// Expected undiscounted `horizon`-step return from the initial state under a
/// stationary stochastic policy (`policy(s)` gives action probabilities).
pub fn policy_return(
    model: &dyn DiscreteModel,
    p: &Parameterization,
    horizon: usize,
    policy: &dyn Fn(usize) -> Vec<f64>,
) -> Result<f64> {
    let t = tabulate(model, &|c| compose(p, c))?;
    let mut dist = vec![0.0; t.n_states];
    dist[model.initial_state()] = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; t.n_states];
        for s in 0..t.n_states {
            if dist[s] == 0.0 {
                continue;
            }
            let probs = policy(s);
            if probs.len() != t.n_actions {
                return Err(Error::LengthMismatch {
                    expected: t.n_actions,
                    got: probs.len(),
                });
            }
            for (a, pa) in probs.iter().enumerate() {
                let i = s * t.n_actions + a;
                let mass = dist[s] * pa;
                total += mass * t.reward[i];
                if !t.done[i] {
                    next[t.next[i]] += mass;
                }
            }
        }
        dist = next;
    }
    Ok(total)
}

/// Best achievable undiscounted `horizon`-step return (backward induction).
pub fn optimal_return(model: &dyn DiscreteModel, p: &Parameterization, horizon: usize) -> Result<f64> {
    let t = tabulate(model, &|c| compose(p, c))?;
    let mut v = vec![0.0; t.n_states];
    for _ in 0..horizon {
        let mut nv = vec![f64::NEG_INFINITY; t.n_states];
        for s in 0..t.n_states {
            for a in 0..t.n_actions {
                let i = s * t.n_actions + a;
                let boot = if t.done[i] { 0.0 } else { v[t.next[i]] };
                nv[s] = nv[s].max(t.reward[i] + boot);
            }
        }
        v = nv;
    }
    Ok(v[model.initial_state()])
}

/// Outcome of [`evaluate_policy`].
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    /// Per-episode mean of the environment's behavior metric.
    pub behaviors: Vec<f64>,
}

impl Evaluation {
    pub fn mean_return(&self) -> f64 {
        mean(&self.returns)
    }

    pub fn mean_behavior(&self) -> f64 {
        mean(&self.behaviors)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Undiscounted returns of `episodes` rollouts under `compose(p, ·)`. Episode
/// `i` is reset with `seed + i`.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    policy: &mut dyn FnMut(&StateVec) -> Result<Action>,
    p: &Parameterization,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(invalid("episodes must be at least 1"));
    }
    let mut returns = Vec::with_capacity(episodes);
    let mut behaviors = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut s = env.reset(seed.wrapping_add(e as u64));
        let (mut ret, mut behavior, mut steps) = (0.0, 0.0, 0usize);
        if env.descriptor().horizon > 0 {
            loop {
                let a = policy(&s)?;
                let step = env.step(&a)?;
                ret += compose(p, step.components.as_slice())?;
                behavior += env.behavior(&step.next_state, &a);
                steps += 1;
                s = step.next_state;
                if step.done || step.truncated {
                    break;
                }
            }
        }
        returns.push(ret);
        behaviors.push(if steps > 0 { behavior / steps as f64 } else { 0.0 });
    }
    Ok(Evaluation { returns, behaviors })
}

/// Settings for [`best_openloop_return_with`].
#[derive(Clone, Copy, Debug)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub init_std: f64,
    pub min_std: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 256,
            elites: 25,
            init_std: 0.5,
            min_std: 0.02,
        }
    }
}

/// Cross-entropy search over open-loop action sequences; returns the best
/// return found from the state reset with `seed`.
pub fn best_openloop_return(
    env: &mut dyn Environment,
    p: &Parameterization,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    best_openloop_return_with(env, p, iters, seed, CemConfig::default())
}

pub fn best_openloop_return_with(
    env: &mut dyn Environment,
    p: &Parameterization,
    iters: usize,
    seed: u64,
    cfg: CemConfig,
) -> Result<f64> {
    let (dim, low, high) = match &env.descriptor().action_spec {
        ActionSpec::Continuous { dim, low, high } => (*dim, low.clone(), high.clone()),
        ActionSpec::Discrete(_) => return Err(invalid("open-loop search needs a continuous environment")),
    };
    if cfg.elites == 0 || cfg.elites > cfg.population {
        return Err(invalid("elites must lie in 1..=population"));
    }
    let horizon = env.descriptor().horizon;
    if horizon == 0 {
        return Ok(0.0);
    }
    let n = horizon * dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu = vec![0.0; n];
    let mut sd = vec![cfg.init_std; n];
    let mut best = f64::NEG_INFINITY;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let rollout = |plan: &[f64], env: &mut dyn Environment| -> Result<f64> {
        env.reset(seed);
        let mut ret = 0.0;
        for t in 0..horizon {
            let a = Action::Continuous(plan[t * dim..(t + 1) * dim].to_vec());
            let step = env.step(&a)?;
            ret += compose(p, step.components.as_slice())?;
            if step.done {
                break;
            }
        }
        Ok(ret)
    };
    for _ in 0..iters.max(1) {
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(cfg.population);
        for _ in 0..cfg.population {
            let plan: Vec<f64> = (0..n)
                .map(|i| {
                    let j = i % dim;
                    (mu[i] + sd[i] * std_normal.sample(&mut rng)).clamp(low[j], high[j])
                })
                .collect();
            let r = rollout(&plan, env)?;
            scored.push((r, plan));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        best = best.max(scored[0].0);
        let elites = &scored[..cfg.elites];
        for i in 0..n {
            let m = elites.iter().map(|(_, x)| x[i]).sum::<f64>() / cfg.elites as f64;
            let var = elites.iter().map(|(_, x)| (x[i] - m).powi(2)).sum::<f64>() / cfg.elites as f64;
            mu[i] = m;
            sd[i] = var.sqrt().max(cfg.min_std);
        }
    }
    let mean_plan: Vec<f64> = mu
        .iter()
        .enumerate()
        .map(|(i, m)| m.clamp(low[i % dim], high[i % dim]))
        .collect();
    best = best.max(rollout(&mean_plan, env)?);
    Ok(best)
}
