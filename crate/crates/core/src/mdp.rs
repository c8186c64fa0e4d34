//! Desk-scale environments that emit reward components instead of a scalar
//! reward.
//!
//! Discrete environments are deterministic and fully enumerable through
//! [`DiscreteModel`]; state indices are row-major and actions ascend, which is
//! the order [`enumerate`] reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::reward::{compose, Parameterization};

pub const GRID_ZONE: &str = "grid-zone";
pub const SPEED_CHAIN: &str = "speed-chain";
pub const POINT_MASS: &str = "point-mass";

/// Names accepted by [`make_env`].
pub const ENV_NAMES: [&str; 3] = [GRID_ZONE, SPEED_CHAIN, POINT_MASS];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    pub values: Vec<f64>,
    /// Present for discrete environments.
    pub index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionSpec {
    Discrete(usize),
    Continuous {
        dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

impl ActionSpec {
    pub fn validate(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (ActionSpec::Discrete(n), Action::Discrete(a)) => {
                if a < n {
                    Ok(())
                } else {
                    Err(Error::InvalidAction(format!("action {a} out of range 0..{n}")))
                }
            }
            (ActionSpec::Continuous { dim, low, high }, Action::Continuous(a)) => {
                if a.len() != *dim {
                    return Err(Error::InvalidAction(format!(
                        "expected {dim} action dimensions, got {}",
                        a.len()
                    )));
                }
                for ((x, l), h) in a.iter().zip(low).zip(high) {
                    if !x.is_finite() || x < l || x > h {
                        return Err(Error::InvalidAction(format!(
                            "action component {x} outside [{l}, {h}]"
                        )));
                    }
                }
                Ok(())
            }
            _ => Err(Error::InvalidAction("action kind does not match the environment".into())),
        }
    }

    pub fn action_count(&self) -> Option<usize> {
        match self {
            ActionSpec::Discrete(n) => Some(*n),
            ActionSpec::Continuous { .. } => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ActionSpec::Discrete(_) => 1,
            ActionSpec::Continuous { dim, .. } => *dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }
}

/// The per-step component vector `c_1..c_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents(pub Vec<f64>);

impl RewardComponents {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("reward components"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: StateVec,
    pub components: RewardComponents,
    pub done: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvDescriptor {
    pub name: String,
    pub state_dim: usize,
    pub action_spec: ActionSpec,
    pub component_count: usize,
    pub nominal: Parameterization,
    pub horizon: usize,
    pub discrete: bool,
    /// Named task rewards sharing this state-action space.
    pub tasks: Vec<(String, Parameterization)>,
}

/// Outcome of one deterministic discrete transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub components: Vec<f64>,
    pub done: bool,
}

/// Exact model of a deterministic discrete environment.
pub trait DiscreteModel: Send + Sync {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    fn initial_state(&self) -> usize;
    fn transition(&self, state: usize, action: usize) -> Result<Outcome>;
    fn decode(&self, state: usize) -> StateVec;
    fn encode(&self, state: &StateVec) -> Result<usize>;
    /// Behavior metric of arriving in `next` via `action`.
    fn behavior(&self, next: usize, action: usize) -> f64;
}

pub trait Environment: Send {
    fn descriptor(&self) -> &EnvDescriptor;
    fn reset(&mut self, seed: u64) -> StateVec;
    fn step(&mut self, action: &Action) -> Result<StepResult>;
    fn state(&self) -> StateVec;
    /// Behavior metric of a step, e.g. realized velocity.
    fn behavior(&self, next_state: &StateVec, action: &Action) -> f64;
    fn model(&self) -> Option<&dyn DiscreteModel> {
        None
    }
}

/// Triangular tolerance: 1 at `target`, 0 beyond `margin`, linear between.
pub fn tolerance(x: f64, target: f64, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(invalid(format!("margin must be positive, got {margin}")));
    }
    Ok((1.0 - (x - target).abs() / margin).max(0.0))
}

fn tol(x: f64, target: f64, margin: f64) -> f64 {
    (1.0 - (x - target).abs() / margin).max(0.0)
}

/// Wraps a [`DiscreteModel`] into an episodic [`Environment`].
pub struct DiscreteEnv<M: DiscreteModel> {
    model: M,
    descriptor: EnvDescriptor,
    state: usize,
    t: usize,
}

impl<M: DiscreteModel> DiscreteEnv<M> {
    pub fn new(model: M, descriptor: EnvDescriptor) -> Self {
        let state = model.initial_state();
        Self {
            model,
            descriptor,
            state,
            t: 0,
        }
    }
}

impl<M: DiscreteModel> Environment for DiscreteEnv<M> {
    fn descriptor(&self) -> &EnvDescriptor {
        &self.descriptor
    }

    fn reset(&mut self, _seed: u64) -> StateVec {
        self.state = self.model.initial_state();
        self.t = 0;
        self.model.decode(self.state)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.descriptor.action_spec.validate(action)?;
        let a = action.index().expect("validated discrete action");
        let out = self.model.transition(self.state, a)?;
        self.state = out.next;
        self.t += 1;
        Ok(StepResult {
            next_state: self.model.decode(out.next),
            components: RewardComponents(out.components),
            done: out.done,
            truncated: !out.done && self.t >= self.descriptor.horizon,
        })
    }

    fn state(&self) -> StateVec {
        self.model.decode(self.state)
    }

    fn behavior(&self, next_state: &StateVec, action: &Action) -> f64 {
        match (self.model.encode(next_state), action.index()) {
            (Ok(s), Some(a)) => self.model.behavior(s, a),
            _ => f64::NAN,
        }
    }

    fn model(&self) -> Option<&dyn DiscreteModel> {
        Some(&self.model)
    }
}

/// 5×5 grid with a goal cell, an energy cost for moving and preferred rows.
#[derive(Clone, Debug)]
pub struct GridZone {
    pub size: usize,
    pub goal: (usize, usize),
    pub preferred_rows: Vec<usize>,
}

impl GridZone {
    pub const UP: usize = 0;
    pub const DOWN: usize = 1;
    pub const LEFT: usize = 2;
    pub const RIGHT: usize = 3;
    pub const STAY: usize = 4;

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.size, index % self.size)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.size + col
    }

    fn goal_distance(&self, index: usize) -> usize {
        let (r, c) = self.cell(index);
        r.abs_diff(self.goal.0) + c.abs_diff(self.goal.1)
    }

    pub fn components(&self, state: usize, action: usize) -> Vec<f64> {
        let (row, _) = self.cell(state);
        let d = self.goal_distance(state) as f64;
        let goal = (-d / 2.0).exp();
        let energy = if action == Self::STAY { 1.0 } else { 0.5 };
        let zone = if self.preferred_rows.contains(&row) { 1.0 } else { 0.2 };
        vec![goal, energy, zone]
    }
}

impl Default for GridZone {
    fn default() -> Self {
        Self {
            size: 5,
            goal: (4, 4),
            preferred_rows: vec![0],
        }
    }
}

impl DiscreteModel for GridZone {
    fn state_count(&self) -> usize {
        self.size * self.size
    }

    fn action_count(&self) -> usize {
        5
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn transition(&self, state: usize, action: usize) -> Result<Outcome> {
        if state >= self.state_count() {
            return Err(invalid(format!("state {state} out of range")));
        }
        let (r, c) = self.cell(state);
        let last = self.size - 1;
        let (nr, nc) = match action {
            Self::UP => (r.saturating_sub(1), c),
            Self::DOWN => ((r + 1).min(last), c),
            Self::LEFT => (r, c.saturating_sub(1)),
            Self::RIGHT => (r, (c + 1).min(last)),
            Self::STAY => (r, c),
            _ => return Err(Error::InvalidAction(format!("action {action} out of range 0..5"))),
        };
        Ok(Outcome {
            next: self.index(nr, nc),
            components: self.components(state, action),
            done: false,
        })
    }

    fn decode(&self, state: usize) -> StateVec {
        let (r, c) = self.cell(state);
        StateVec {
            values: vec![r as f64, c as f64],
            index: Some(state),
        }
    }

    fn encode(&self, state: &StateVec) -> Result<usize> {
        encode_pair(state, self.size, self.size)
    }

    fn behavior(&self, next: usize, _action: usize) -> f64 {
        self.goal_distance(next) as f64
    }
}

fn encode_pair(state: &StateVec, rows: usize, cols: usize) -> Result<usize> {
    if state.values.len() != 2 {
        return Err(Error::LengthMismatch {
            expected: 2,
            got: state.values.len(),
        });
    }
    let (a, b) = (state.values[0], state.values[1]);
    let ok = |x: f64, n: usize| x >= 0.0 && x.fract() == 0.0 && (x as usize) < n;
    if !ok(a, rows) || !ok(b, cols) {
        return Err(invalid("state values do not name a discrete state"));
    }
    Ok(a as usize * cols + b as usize)
}

/// A ring of positions traversed at a controllable integer speed; one
/// tolerance component per target speed.
#[derive(Clone, Debug)]
pub struct SpeedChain {
    pub positions: usize,
    pub max_speed: usize,
    pub margin: f64,
}

impl SpeedChain {
    pub const DECEL: usize = 0;
    pub const HOLD: usize = 1;
    pub const ACCEL: usize = 2;

    pub fn split(&self, index: usize) -> (usize, usize) {
        let speeds = self.max_speed + 1;
        (index / speeds, index % speeds)
    }

    pub fn join(&self, position: usize, velocity: usize) -> usize {
        position * (self.max_speed + 1) + velocity
    }

    fn next_velocity(&self, v: usize, action: usize) -> usize {
        match action {
            Self::DECEL => v.saturating_sub(1),
            Self::HOLD => v,
            _ => (v + 1).min(self.max_speed),
        }
    }
}

impl Default for SpeedChain {
    fn default() -> Self {
        Self {
            positions: 8,
            max_speed: 3,
            margin: 1.0,
        }
    }
}

impl DiscreteModel for SpeedChain {
    fn state_count(&self) -> usize {
        self.positions * (self.max_speed + 1)
    }

    fn action_count(&self) -> usize {
        3
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn transition(&self, state: usize, action: usize) -> Result<Outcome> {
        if state >= self.state_count() {
            return Err(invalid(format!("state {state} out of range")));
        }
        if action >= 3 {
            return Err(Error::InvalidAction(format!("action {action} out of range 0..3")));
        }
        let (p, v) = self.split(state);
        let nv = self.next_velocity(v, action);
        let np = (p + nv) % self.positions;
        let components = (0..=self.max_speed)
            .map(|t| tol(nv as f64, t as f64, self.margin))
            .collect();
        Ok(Outcome {
            next: self.join(np, nv),
            components,
            done: false,
        })
    }

    fn decode(&self, state: usize) -> StateVec {
        let (p, v) = self.split(state);
        StateVec {
            values: vec![p as f64, v as f64],
            index: Some(state),
        }
    }

    fn encode(&self, state: &StateVec) -> Result<usize> {
        encode_pair(state, self.positions, self.max_speed + 1)
    }

    fn behavior(&self, next: usize, _action: usize) -> f64 {
        self.split(next).1 as f64
    }
}

/// Planar point mass pushed by a bounded force; rewarded for forward speed
/// and charged for control effort.
#[derive(Clone, Debug)]
pub struct PointMass {
    descriptor: EnvDescriptor,
    /// `[x, y, vx, vy]`
    state: [f64; 4],
    t: usize,
}

impl PointMass {
    pub const DT: f64 = 0.05;
    pub const DAMPING: f64 = 0.95;
    pub const GAIN: f64 = 0.1;

    pub fn new() -> Self {
        Self::with_horizon(200)
    }

    pub fn with_horizon(horizon: usize) -> Self {
        let mut descriptor = point_mass_descriptor();
        descriptor.horizon = horizon;
        Self {
            descriptor,
            state: [0.0; 4],
            t: 0,
        }
    }

    pub fn components(velocity_x: f64, action: &[f64]) -> Vec<f64> {
        let progress = velocity_x.clamp(0.0, 1.0);
        let effort: f64 = action.iter().map(|a| a * a).sum();
        vec![progress, 1.0 - effort / 2.0]
    }

    fn snapshot(&self) -> StateVec {
        StateVec {
            values: self.state.to_vec(),
            index: None,
        }
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn descriptor(&self) -> &EnvDescriptor {
        &self.descriptor
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = [
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            0.0,
            0.0,
        ];
        self.t = 0;
        self.snapshot()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.descriptor.action_spec.validate(action)?;
        let Action::Continuous(a) = action else {
            unreachable!("validated continuous action")
        };
        let [x, y, vx, vy] = self.state;
        let nvx = Self::DAMPING * vx + Self::GAIN * a[0];
        let nvy = Self::DAMPING * vy + Self::GAIN * a[1];
        self.state = [x + Self::DT * vx, y + Self::DT * vy, nvx, nvy];
        self.t += 1;
        Ok(StepResult {
            next_state: self.snapshot(),
            components: RewardComponents(Self::components(nvx, a)),
            done: false,
            truncated: self.t >= self.descriptor.horizon,
        })
    }

    fn state(&self) -> StateVec {
        self.snapshot()
    }

    fn behavior(&self, _next_state: &StateVec, action: &Action) -> f64 {
        match action {
            Action::Continuous(a) => a.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Action::Discrete(_) => f64::NAN,
        }
    }
}

fn grid_descriptor() -> EnvDescriptor {
    let names = ["goal", "energy", "zone"];
    EnvDescriptor {
        name: GRID_ZONE.into(),
        state_dim: 2,
        action_spec: ActionSpec::Discrete(5),
        component_count: 3,
        nominal: Parameterization::linear(vec![1.0, 0.1, 0.3]).expect("valid nominal"),
        horizon: 50,
        discrete: true,
        tasks: names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.to_string(), Parameterization::one_hot(3, i)))
            .collect(),
    }
}

fn speed_descriptor(chain: &SpeedChain) -> EnvDescriptor {
    let k = chain.max_speed + 1;
    EnvDescriptor {
        name: SPEED_CHAIN.into(),
        state_dim: 2,
        action_spec: ActionSpec::Discrete(3),
        component_count: k,
        nominal: Parameterization::one_hot(k, chain.max_speed),
        horizon: 40,
        discrete: true,
        tasks: (0..k)
            .map(|t| (format!("speed-{t}"), Parameterization::one_hot(k, t)))
            .collect(),
    }
}

fn point_mass_descriptor() -> EnvDescriptor {
    EnvDescriptor {
        name: POINT_MASS.into(),
        state_dim: 4,
        action_spec: ActionSpec::Continuous {
            dim: 2,
            low: vec![-1.0, -1.0],
            high: vec![1.0, 1.0],
        },
        component_count: 2,
        nominal: Parameterization::linear(vec![1.0, 0.25]).expect("valid nominal"),
        horizon: 200,
        discrete: false,
        tasks: Vec::new(),
    }
}

/// Builds a fresh environment by name.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        GRID_ZONE => Ok(Box::new(DiscreteEnv::new(GridZone::default(), grid_descriptor()))),
        SPEED_CHAIN => {
            let chain = SpeedChain::default();
            let d = speed_descriptor(&chain);
            Ok(Box::new(DiscreteEnv::new(chain, d)))
        }
        POINT_MASS => Ok(Box::new(PointMass::new())),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

pub fn descriptor(name: &str) -> Result<EnvDescriptor> {
    Ok(make_env(name)?.descriptor().clone())
}

/// Initial state of a freshly reset environment.
pub fn reset(name: &str, seed: u64) -> Result<StateVec> {
    Ok(make_env(name)?.reset(seed))
}

/// Exact model of a discrete environment.
pub fn discrete_model(name: &str) -> Result<Box<dyn DiscreteModel>> {
    match name {
        GRID_ZONE => Ok(Box::new(GridZone::default())),
        SPEED_CHAIN => Ok(Box::new(SpeedChain::default())),
        POINT_MASS => Err(Error::ContinuousEnv(name.into())),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

/// Every state-action pair, states ascending then actions ascending.
pub fn enumerate(name: &str) -> Result<Vec<(StateVec, Action)>> {
    let model = discrete_model(name)?;
    let mut out = Vec::with_capacity(model.state_count() * model.action_count());
    for s in 0..model.state_count() {
        for a in 0..model.action_count() {
            out.push((model.decode(s), Action::Discrete(a)));
        }
    }
    Ok(out)
}

/// Scalar nominal reward of a step.
pub fn nominal_reward(descriptor: &EnvDescriptor, step: &StepResult) -> Result<f64> {
    compose(&descriptor.nominal, step.components.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resets() {
        assert_eq!(reset(GRID_ZONE, 0).unwrap().index, Some(0));
        let s = reset(SPEED_CHAIN, 7).unwrap();
        assert_eq!(s.values, vec![0.0, 0.0]);
        assert_eq!(reset(POINT_MASS, 3).unwrap(), reset(POINT_MASS, 3).unwrap());
        assert_ne!(reset(POINT_MASS, 3).unwrap(), reset(POINT_MASS, 4).unwrap());
        assert!(matches!(reset("cartpole", 0), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn grid_goal_component() {
        let g = GridZone::default();
        let goal = g.index(g.goal.0, g.goal.1);
        for a in 0..5 {
            let out = g.transition(goal, a).unwrap();
            assert_eq!(out.components[0], 1.0);
        }
        assert_eq!(g.transition(goal, GridZone::STAY).unwrap().components[1], 1.0);
        assert_eq!(g.transition(goal, GridZone::UP).unwrap().components[1], 0.5);
    }

    #[test]
    fn grid_walls_clamp() {
        let g = GridZone::default();
        assert_eq!(g.transition(0, GridZone::UP).unwrap().next, 0);
        assert_eq!(g.transition(0, GridZone::LEFT).unwrap().next, 0);
        assert_eq!(g.transition(0, GridZone::RIGHT).unwrap().next, 1);
        assert_eq!(g.transition(0, GridZone::DOWN).unwrap().next, 5);
    }

    #[test]
    fn speed_chain_hold() {
        let c = SpeedChain::default();
        let s = c.join(5, 2);
        let out = c.transition(s, SpeedChain::HOLD).unwrap();
        assert_eq!(c.split(out.next), (7, 2));
        assert_eq!(out.components[2], 1.0);
        assert_eq!(out.components, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn point_mass_zero_action() {
        let mut env = PointMass::new();
        env.reset(0);
        let step = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(step.components.0[1], 1.0);
        assert!(env.step(&Action::Continuous(vec![1.5, 0.0])).is_err());
        assert!(env.step(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn point_mass_dynamics() {
        let mut env = PointMass::new();
        let s0 = env.reset(1);
        let step = env.step(&Action::Continuous(vec![1.0, -0.5])).unwrap();
        let v = &step.next_state.values;
        assert_eq!(v[0], s0.values[0]);
        assert!((v[2] - 0.1).abs() < 1e-15);
        assert!((v[3] + 0.05).abs() < 1e-15);
        let step = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert!((step.next_state.values[0] - (s0.values[0] + 0.005)).abs() < 1e-15);
        assert!((step.next_state.values[2] - 0.095).abs() < 1e-15);
    }

    #[test]
    fn enumerations() {
        assert_eq!(enumerate(GRID_ZONE).unwrap().len(), 125);
        let speed = enumerate(SPEED_CHAIN).unwrap();
        assert_eq!(speed.len(), 96);
        assert_eq!(speed[0].0.index, Some(0));
        assert_eq!(speed[1].1, Action::Discrete(1));
        assert_eq!(speed[3].0.index, Some(1));
        assert!(matches!(enumerate(POINT_MASS), Err(Error::ContinuousEnv(_))));
    }

    #[test]
    fn tolerance_shape() {
        assert_eq!(tolerance(2.0, 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(tolerance(3.5, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(tolerance(2.5, 2.0, 1.0).unwrap(), 0.5);
        assert_eq!(tolerance(1.5, 2.0, 1.0).unwrap(), 0.5);
        assert!(tolerance(0.0, 0.0, 0.0).is_err());
        assert!(tolerance(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn invalid_discrete_action() {
        let mut env = make_env(SPEED_CHAIN).unwrap();
        env.reset(0);
        assert!(env.step(&Action::Discrete(3)).is_err());
    }

    #[test]
    fn truncates_at_horizon() {
        let mut env = make_env(SPEED_CHAIN).unwrap();
        env.reset(0);
        for t in 1..=40 {
            let step = env.step(&Action::Discrete(SpeedChain::ACCEL)).unwrap();
            assert_eq!(step.truncated, t == 40);
        }
    }

    #[test]
    fn encode_round_trips() {
        for name in [GRID_ZONE, SPEED_CHAIN] {
            let m = discrete_model(name).unwrap();
            for s in 0..m.state_count() {
                assert_eq!(m.encode(&m.decode(s)).unwrap(), s);
            }
        }
    }
}
