use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::argmax;
use crate::replay::Transition;

/// Step-size schedule, indexed by the visit count of the updated entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { value: f64 },
    /// `n^-power` on the n-th update of an entry.
    Polynomial { power: f64 },
    /// `scale / (scale + n - 1)`: 1 on the first update, then roughly `scale / n`.
    Harmonic { scale: f64 },
}

impl LearningRate {
    pub fn at(&self, visits: u32) -> f64 {
        match *self {
            LearningRate::Constant { value } => value,
            LearningRate::Polynomial { power } => (visits.max(1) as f64).powf(-power),
            LearningRate::Harmonic { scale } => scale / (scale + visits.max(1) as f64 - 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LearningRate::Constant { value } if value > 0.0 && value <= 1.0 => Ok(()),
            LearningRate::Polynomial { power } if power > 0.0 && power <= 1.0 => Ok(()),
            LearningRate::Harmonic { scale } if scale >= 1.0 && scale.is_finite() => Ok(()),
            other => Err(invalid(format!("invalid learning rate {other:?}"))),
        }
    }
}

/// `Q(s, a, slot)` with one slice of the table per conditioning slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_slots: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub learning_rate: LearningRate,
    table: Vec<f64>,
    /// Per-entry update counts; the schedule's only state.
    visits: Vec<u32>,
}

impl TabularQ {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_slots: usize,
        gamma: f64,
        epsilon: f64,
        learning_rate: LearningRate,
    ) -> Result<Self> {
        if n_states == 0 || n_actions < 2 || n_slots == 0 {
            return Err(invalid("empty table"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        learning_rate.validate()?;
        let n = n_states * n_actions * n_slots;
        Ok(Self {
            n_states,
            n_actions,
            n_slots,
            gamma,
            epsilon,
            learning_rate,
            table: vec![0.0; n],
            visits: vec![0; n],
        })
    }

    fn offset(&self, s: usize, slot: usize) -> usize {
        (slot * self.n_states + s) * self.n_actions
    }

    fn check(&self, s: usize, slot: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(invalid(format!("state {s} out of range")));
        }
        if slot >= self.n_slots {
            return Err(Error::UnknownId(slot));
        }
        Ok(())
    }

    pub fn value(&self, s: usize, a: usize, slot: usize) -> f64 {
        self.table[self.offset(s, slot) + a]
    }

    pub fn row(&self, s: usize, slot: usize) -> &[f64] {
        let o = self.offset(s, slot);
        &self.table[o..o + self.n_actions]
    }

    /// All values of one slot, states then actions.
    pub fn slot_values(&self, slot: usize) -> &[f64] {
        let o = self.offset(0, slot);
        &self.table[o..o + self.n_states * self.n_actions]
    }

    pub fn visits(&self, s: usize, a: usize, slot: usize) -> u32 {
        self.visits[self.offset(s, slot) + a]
    }

    /// One Q-learning step; returns the TD error before the update.
    pub fn update(&mut self, s: usize, a: usize, slot: usize, r: f64, next: usize, done: bool) -> Result<f64> {
        self.check(s, slot)?;
        self.check(next, slot)?;
        if a >= self.n_actions {
            return Err(Error::InvalidAction(format!("action {a} out of range")));
        }
        if !r.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let boot = if done {
            0.0
        } else {
            self.row(next, slot).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let i = self.offset(s, slot) + a;
        self.visits[i] = self.visits[i].saturating_add(1);
        let td = r + self.gamma * boot - self.table[i];
        self.table[i] += self.learning_rate.at(self.visits[i]) * td;
        Ok(td)
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, s: usize, slot: usize) -> usize {
        argmax(self.row(s, slot))
    }

    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R, s: usize, slot: usize, explore: bool) -> usize {
        if explore && rng.random::<f64>() < self.epsilon {
            rng.random_range(0..self.n_actions)
        } else {
            self.greedy(s, slot)
        }
    }

    /// Forgets the schedule state, keeping the values.
    pub fn reset_schedule(&mut self) {
        self.visits.iter_mut().for_each(|v| *v = 0);
    }
}

/// A tabular learner that either keeps one table slice per pool id or, with
/// conditioning removed, shares a single slice across all ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularAgent {
    pub q: TabularQ,
    pub conditioned: bool,
}

impl TabularAgent {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        pool_size: usize,
        conditioned: bool,
        gamma: f64,
        epsilon: f64,
        learning_rate: LearningRate,
    ) -> Result<Self> {
        let slots = if conditioned { pool_size } else { 1 };
        Ok(Self {
            q: TabularQ::new(n_states, n_actions, slots, gamma, epsilon, learning_rate)?,
            conditioned,
        })
    }

    pub fn slot(&self, id: usize) -> Result<usize> {
        if self.conditioned {
            if id >= self.q.n_slots {
                return Err(Error::UnknownId(id));
            }
            Ok(id)
        } else {
            Ok(0)
        }
    }

    /// Q-learning update on a replayed transition relabeled with reward `r`
    /// under parameterization `id`.
    pub fn update(&mut self, t: &Transition, id: usize, r: f64) -> Result<f64> {
        let s = t.state.index.ok_or_else(|| invalid("tabular update needs a discrete state"))?;
        let next = t
            .next_state
            .index
            .ok_or_else(|| invalid("tabular update needs a discrete state"))?;
        let a = t
            .action
            .index()
            .ok_or_else(|| invalid("tabular update needs a discrete action"))?;
        let slot = self.slot(id)?;
        self.q.update(s, a, slot, r, next, t.done)
    }

    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R, s: usize, id: usize, explore: bool) -> Result<usize> {
        Ok(self.q.act(rng, s, self.slot(id)?, explore))
    }

    pub fn greedy(&self, s: usize, id: usize) -> Result<usize> {
        Ok(self.q.greedy(s, self.slot(id)?))
    }

    /// Largest absolute deviation from a reference table for `id`.
    pub fn max_error(&self, id: usize, reference: &[f64]) -> Result<f64> {
        let values = self.q.slot_values(self.slot(id)?);
        if values.len() != reference.len() {
            return Err(Error::LengthMismatch {
                expected: values.len(),
                got: reference.len(),
            });
        }
        Ok(values
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}
