//! Deterministic-policy actor-critic with a categorical critic.
//!
//! The critic maps `[s, block(ψ), a]` to logits over the value support, the
//! actor maps `[s, block(ψ)]` to a tanh-squashed action. In multi-head mode the
//! block is empty and both networks carry one output head per pool id.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::categorical::{cross_entropy, softmax_rows, Support};
use super::conditioning::{condition_block, ConditioningMode, EmbeddingTable};
use super::nn::{Cache, DenseNet, Momentum, Params};
use crate::error::{invalid, Error, Result};
use crate::replay::Transition;
use crate::reward::Parameterization;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: f64,
    pub action_high: f64,
    /// Number of reward components.
    pub k: usize,
    /// Ids addressable by embedding and multi-head modes.
    pub pool_size: usize,
    pub mode: ConditioningMode,
    /// Perturbation spread, for `concat_delta` standardization.
    pub spread: f64,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub support: Support,
    pub gamma: f64,
    pub lr: f64,
    pub momentum: f64,
    pub tau: f64,
    pub sigma: f64,
    pub embed_dim: usize,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            state_dim: 4,
            action_dim: 2,
            action_low: -1.0,
            action_high: 1.0,
            k: 2,
            pool_size: 1,
            mode: ConditioningMode::ConcatPsi,
            spread: 16.0,
            critic_hidden: vec![128, 128],
            actor_hidden: vec![64, 64],
            support: Support::default(),
            gamma: 0.99,
            lr: 1e-3,
            momentum: 0.9,
            tau: 0.005,
            sigma: 0.2,
            embed_dim: 8,
        }
    }
}

impl AcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 || self.k == 0 || self.pool_size == 0 {
            return Err(invalid("state, action, component and pool sizes must be positive"));
        }
        if !(self.action_high > self.action_low) {
            return Err(invalid("action bounds are empty"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.sigma >= 0.0) {
            return Err(invalid("sigma must be nonnegative"));
        }
        if self.mode == ConditioningMode::Embedding && self.embed_dim == 0 {
            return Err(invalid("embedding mode needs embed_dim > 0"));
        }
        if self.mode == ConditioningMode::ConcatDelta && !(self.spread > 1.0) {
            return Err(invalid("concat_delta needs spread > 1"));
        }
        Support::new(self.support.v_min, self.support.v_max, self.support.atoms)?;
        Ok(())
    }

    pub fn heads(&self) -> usize {
        self.mode.heads(self.pool_size)
    }

    pub fn cond_width(&self) -> usize {
        self.mode.input_width(self.k, self.embed_dim)
    }

    fn critic_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.state_dim + self.cond_width() + self.action_dim];
        v.extend(&self.critic_hidden);
        v.push(self.heads() * self.support.atoms);
        v
    }

    fn actor_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.state_dim + self.cond_width()];
        v.extend(&self.actor_hidden);
        v.push(self.heads() * self.action_dim);
        v
    }
}

/// A relabeled minibatch. `rewards[i]` is the (normalized) reward of
/// transition `i` under `params[i]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
    pub params: Vec<Parameterization>,
}

impl Batch {
    pub fn new(transitions: &[&Transition], params: Vec<Parameterization>, rewards: Vec<f64>) -> Result<Self> {
        let n = transitions.len();
        if n == 0 {
            return Err(Error::EmptyBuffer);
        }
        for len in [params.len(), rewards.len()] {
            if len != n {
                return Err(Error::LengthMismatch { expected: n, got: len });
            }
        }
        let sd = transitions[0].state.values.len();
        let ad = match &transitions[0].action {
            crate::mdp::Action::Continuous(a) => a.len(),
            crate::mdp::Action::Discrete(_) => return Err(invalid("actor-critic needs continuous actions")),
        };
        let mut states = Array2::zeros((n, sd));
        let mut next_states = Array2::zeros((n, sd));
        let mut actions = Array2::zeros((n, ad));
        for (i, t) in transitions.iter().enumerate() {
            let a = match &t.action {
                crate::mdp::Action::Continuous(a) if a.len() == ad => a,
                _ => return Err(invalid("mixed action kinds in batch")),
            };
            if t.state.values.len() != sd || t.next_state.values.len() != sd {
                return Err(Error::LengthMismatch {
                    expected: sd,
                    got: t.state.values.len(),
                });
            }
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state.values[..]));
            next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state.values[..]));
            actions.row_mut(i).assign(&ndarray::ArrayView1::from(&a[..]));
        }
        Ok(Self {
            states,
            actions,
            rewards,
            next_states,
            dones: transitions.iter().map(|t| t.done).collect(),
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Critic loss and its gradients with respect to the online critic and,
/// in embedding mode, the embedding table.
#[derive(Clone, Debug)]
pub struct CriticGrads {
    pub loss: f64,
    pub critic: DenseNet,
    pub embeddings: Option<EmbeddingTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub cfg: AcConfig,
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub target_actor: DenseNet,
    pub target_critic: DenseNet,
    pub embeddings: Option<EmbeddingTable>,
    actor_opt: Momentum,
    critic_opt: Momentum,
    embed_opt: Momentum,
}

fn select(out: &Array2<f64>, heads: &[usize], width: usize) -> Array2<f64> {
    Array2::from_shape_fn((out.nrows(), width), |(i, j)| out[[i, heads[i] * width + j]])
}

fn scatter(g: &Array2<f64>, heads: &[usize], width: usize, total: usize) -> Array2<f64> {
    let mut full = Array2::zeros((g.nrows(), total));
    for (i, &h) in heads.iter().enumerate() {
        full.slice_mut(s![i, h * width..(h + 1) * width]).assign(&g.row(i));
    }
    full
}

/// Last-layer init bound, so early actions sit near zero and the critic starts flat.
pub const OUTPUT_INIT: f64 = 3e-3;

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(cfg: AcConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let critic = DenseNet::with_output_bound(&cfg.critic_sizes(), Some(OUTPUT_INIT), rng)?;
        let actor = DenseNet::with_output_bound(&cfg.actor_sizes(), Some(OUTPUT_INIT), rng)?;
        let embeddings = match cfg.mode {
            ConditioningMode::Embedding => Some(EmbeddingTable::new(cfg.pool_size, cfg.embed_dim, rng)?),
            _ => None,
        };
        let opt = Momentum::new(cfg.lr, cfg.momentum)?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            embeddings,
            actor_opt: opt.clone(),
            critic_opt: opt.clone(),
            embed_opt: opt,
            cfg,
        })
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count()
            + self.critic.param_count()
            + self.embeddings.as_ref().map_or(0, |e| e.ids() * e.dim())
    }

    /// Drops optimizer state, keeping all parameters.
    pub fn reset_optimizers(&mut self) {
        self.actor_opt.reset();
        self.critic_opt.reset();
        self.embed_opt.reset();
    }

    fn head_of(&self, p: &Parameterization) -> Result<usize> {
        if self.cfg.mode == ConditioningMode::MultiHead {
            if p.id >= self.cfg.pool_size {
                return Err(Error::UnknownId(p.id));
            }
            Ok(p.id)
        } else {
            Ok(0)
        }
    }

    fn heads_of(&self, params: &[Parameterization]) -> Result<Vec<usize>> {
        params.iter().map(|p| self.head_of(p)).collect()
    }

    fn cond_rows(&self, params: &[Parameterization]) -> Result<Array2<f64>> {
        let w = self.cfg.cond_width();
        let mut out = Array2::zeros((params.len(), w));
        if w == 0 {
            return Ok(out);
        }
        for (i, p) in params.iter().enumerate() {
            if p.len() != self.cfg.k {
                return Err(Error::LengthMismatch {
                    expected: self.cfg.k,
                    got: p.len(),
                });
            }
            let block = condition_block(p, self.cfg.mode, self.embeddings.as_ref(), self.cfg.spread)?;
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&block[..]));
        }
        Ok(out)
    }

    fn half_range(&self) -> f64 {
        0.5 * (self.cfg.action_high - self.cfg.action_low)
    }

    fn mid(&self) -> f64 {
        0.5 * (self.cfg.action_high + self.cfg.action_low)
    }

    /// Actions from `net` plus the forward cache and the squashed head outputs.
    fn policy(
        &self,
        net: &DenseNet,
        states: &Array2<f64>,
        cond: &Array2<f64>,
        heads: &[usize],
    ) -> Result<(Array2<f64>, Cache, Array2<f64>)> {
        let x = concatenate(Axis(1), &[states.view(), cond.view()]).map_err(|e| invalid(e.to_string()))?;
        let cache = net.forward_cached(&x)?;
        let t = select(cache.output(), heads, self.cfg.action_dim).mapv(f64::tanh);
        let (mid, half) = (self.mid(), self.half_range());
        Ok((t.mapv(|v| mid + half * v), cache, t))
    }

    fn critic_forward(
        &self,
        net: &DenseNet,
        states: &Array2<f64>,
        cond: &Array2<f64>,
        actions: &Array2<f64>,
        heads: &[usize],
    ) -> Result<(Array2<f64>, Cache)> {
        let x = concatenate(Axis(1), &[states.view(), cond.view(), actions.view()])
            .map_err(|e| invalid(e.to_string()))?;
        let cache = net.forward_cached(&x)?;
        Ok((select(cache.output(), heads, self.cfg.support.atoms), cache))
    }

    /// Projected Bellman targets from the target networks, one row per sample.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Array2<f64>> {
        let heads = self.heads_of(&batch.params)?;
        let cond = self.cond_rows(&batch.params)?;
        let (next_a, _, _) = self.policy(&self.target_actor, &batch.next_states, &cond, &heads)?;
        let (logits, _) = self.critic_forward(&self.target_critic, &batch.next_states, &cond, &next_a, &heads)?;
        let probs = softmax_rows(&logits);
        let support = self.cfg.support;
        let atoms = support.values();
        let mut out = Array2::zeros((batch.len(), support.atoms));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let r = batch.rewards[i];
            if !r.is_finite() {
                return Err(Error::NonFinite("reward"));
            }
            let p = probs.row(i);
            support.project_into(
                &atoms,
                p.as_slice().expect("standard layout"),
                r,
                batch.dones[i],
                self.cfg.gamma,
                row.as_slice_mut().expect("standard layout"),
            );
        }
        Ok(out)
    }

    /// Cross-entropy of the online critic against fixed `targets`.
    pub fn critic_gradients(&self, batch: &Batch, targets: &Array2<f64>) -> Result<CriticGrads> {
        let heads = self.heads_of(&batch.params)?;
        let cond = self.cond_rows(&batch.params)?;
        let (logits, cache) = self.critic_forward(&self.critic, &batch.states, &cond, &batch.actions, &heads)?;
        let (loss, g) = cross_entropy(&logits, targets);
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic loss"));
        }
        let m = self.cfg.support.atoms;
        let full = scatter(&g, &heads, m, self.critic.output_dim());
        let mut grads = self.critic.zeros_like();
        let gx = self.critic.backward(&cache, &full, &mut grads);
        let embeddings = match &self.embeddings {
            Some(table) => {
                let mut ge = EmbeddingTable::zeros(table.ids(), table.dim());
                let sd = self.cfg.state_dim;
                for (i, p) in batch.params.iter().enumerate() {
                    let row = ge.row_mut(p.id)?;
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += gx[[i, sd + j]];
                    }
                }
                Some(ge)
            }
            None => None,
        };
        Ok(CriticGrads {
            loss,
            critic: grads,
            embeddings,
        })
    }

    /// One critic step: projected targets, cross-entropy gradient step on the
    /// critic (and embeddings), then Polyak averaging of the target critic.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<f64> {
        let targets = self.critic_targets(batch)?;
        let g = self.critic_gradients(batch, &targets)?;
        self.critic_opt.step(&mut self.critic, &g.critic)?;
        if let (Some(table), Some(ge)) = (self.embeddings.as_mut(), g.embeddings.as_ref()) {
            self.embed_opt.step(table, ge)?;
        }
        self.target_critic.soft_update(&self.critic, self.cfg.tau);
        Ok(g.loss)
    }

    /// Negative mean critic value at the actor's actions, and its gradient
    /// with respect to the actor. The critic and embeddings are read only.
    pub fn actor_gradients(&self, batch: &Batch) -> Result<(f64, DenseNet)> {
        let heads = self.heads_of(&batch.params)?;
        let cond = self.cond_rows(&batch.params)?;
        let (actions, actor_cache, t) = self.policy(&self.actor, &batch.states, &cond, &heads)?;
        let (logits, critic_cache) = self.critic_forward(&self.critic, &batch.states, &cond, &actions, &heads)?;
        let probs = softmax_rows(&logits);
        let atoms = self.cfg.support.values();
        let n = batch.len() as f64;
        let m = self.cfg.support.atoms;
        let mut loss = 0.0;
        let mut g = Array2::zeros(probs.raw_dim());
        for (i, p) in probs.rows().into_iter().enumerate() {
            let q: f64 = p.iter().zip(&atoms).map(|(p, z)| p * z).sum();
            loss -= q / n;
            for j in 0..m {
                g[[i, j]] = -p[j] * (atoms[j] - q) / n;
            }
        }
        let full = scatter(&g, &heads, m, self.critic.output_dim());
        let mut scratch = self.critic.zeros_like();
        let gx = self.critic.backward(&critic_cache, &full, &mut scratch);
        let offset = self.cfg.state_dim + self.cfg.cond_width();
        let d = self.cfg.action_dim;
        let half = self.half_range();
        let ga = gx.slice(s![.., offset..offset + d]).to_owned();
        let gy = Array2::from_shape_fn(ga.raw_dim(), |(i, j)| ga[[i, j]] * half * (1.0 - t[[i, j]] * t[[i, j]]));
        let full = scatter(&gy, &heads, d, self.actor.output_dim());
        let mut grads = self.actor.zeros_like();
        self.actor.backward(&actor_cache, &full, &mut grads);
        if !loss.is_finite() {
            return Err(Error::NonFinite("actor loss"));
        }
        Ok((loss, grads))
    }

    pub fn actor_update(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, g) = self.actor_gradients(batch)?;
        self.actor_opt.step(&mut self.actor, &g)?;
        self.target_actor.soft_update(&self.actor, self.cfg.tau);
        Ok(loss)
    }

    /// Critic step followed by actor step on the same batch.
    pub fn update(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let c = self.critic_update(batch)?;
        let a = self.actor_update(batch)?;
        Ok((c, a))
    }

    /// Deterministic action, or gaussian-perturbed and clipped when exploring.
    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R, s: &[f64], p: &Parameterization, explore: bool) -> Result<Vec<f64>> {
        if s.len() != self.cfg.state_dim {
            return Err(Error::LengthMismatch {
                expected: self.cfg.state_dim,
                got: s.len(),
            });
        }
        let params = std::slice::from_ref(p);
        let heads = self.heads_of(params)?;
        let cond = self.cond_rows(params)?;
        let states = Array2::from_shape_vec((1, s.len()), s.to_vec()).expect("one row");
        let (a, _, _) = self.policy(&self.actor, &states, &cond, &heads)?;
        let mut a = a.row(0).to_vec();
        if explore && self.cfg.sigma > 0.0 {
            let noise = Normal::new(0.0, self.cfg.sigma * self.half_range()).map_err(|e| invalid(e.to_string()))?;
            for v in a.iter_mut() {
                *v = (*v + noise.sample(rng)).clamp(self.cfg.action_low, self.cfg.action_high);
            }
        }
        Ok(a)
    }

    /// Expected critic value at `(s, a)` under `p`.
    pub fn value(&self, s: &[f64], p: &Parameterization, a: &[f64]) -> Result<f64> {
        let params = std::slice::from_ref(p);
        let heads = self.heads_of(params)?;
        let cond = self.cond_rows(params)?;
        let states = Array2::from_shape_vec((1, s.len()), s.to_vec()).map_err(|e| invalid(e.to_string()))?;
        let actions = Array2::from_shape_vec((1, a.len()), a.to_vec()).map_err(|e| invalid(e.to_string()))?;
        let (logits, _) = self.critic_forward(&self.critic, &states, &cond, &actions, &heads)?;
        Ok(self.cfg.support.expected(softmax_rows(&logits).row(0)))
    }

    /// Predicted value distributions of the online critic at the batch's
    /// stored actions.
    pub fn predict(&self, batch: &Batch) -> Result<Array2<f64>> {
        let heads = self.heads_of(&batch.params)?;
        let cond = self.cond_rows(&batch.params)?;
        let (logits, _) = self.critic_forward(&self.critic, &batch.states, &cond, &batch.actions, &heads)?;
        Ok(softmax_rows(&logits))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ac: Self = serde_json::from_str(s)?;
        ac.check_shapes()?;
        Ok(ac)
    }

    /// Verifies that every parameter block agrees with the config.
    pub fn check_shapes(&self) -> Result<()> {
        self.cfg.validate()?;
        let ok = |net: &DenseNet, sizes: &[usize]| {
            net.sizes == sizes
                && net.weights.len() + 1 == sizes.len()
                && net.biases.len() + 1 == sizes.len()
                && sizes.windows(2).zip(net.weights.iter().zip(&net.biases)).all(|(w, (m, b))| {
                    m.dim() == (w[0], w[1]) && b.len() == w[1] && m.is_standard_layout()
                })
        };
        let (cs, as_) = (self.cfg.critic_sizes(), self.cfg.actor_sizes());
        if !ok(&self.critic, &cs) || !ok(&self.target_critic, &cs) || !ok(&self.actor, &as_) || !ok(&self.target_actor, &as_)
        {
            return Err(Error::Parse("network shapes disagree with the config".into()));
        }
        match (&self.embeddings, self.cfg.mode) {
            (Some(e), ConditioningMode::Embedding) if e.ids() == self.cfg.pool_size && e.dim() == self.cfg.embed_dim => {}
            (None, m) if m != ConditioningMode::Embedding => {}
            _ => return Err(Error::Parse("embedding table disagrees with the config".into())),
        }
        let finite = |p: &dyn Params| p.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite(&self.critic) || !finite(&self.actor) || !finite(&self.target_critic) || !finite(&self.target_actor) {
            return Err(Error::NonFinite("checkpoint parameters"));
        }
        Ok(())
    }
}
