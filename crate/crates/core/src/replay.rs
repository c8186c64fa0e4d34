//! Replay storing reward components, never scalar rewards.
//!
//! Rewards are recomputed at sample time by [`relabel`] under whichever
//! parameterization the mixture picked for each transition.
//!
//! # Snapshot layout
//!
//! [`ReplayBuffer::write_snapshot`] emits a flat little-endian file:
//!
//! ```text
//! magic        8 bytes   "RCRLBUF1"
//! capacity     u64
//! k            u32       components per transition
//! state_dim    u32
//! action_kind  u8        0 = discrete, 1 = continuous
//! action_dim   u32       0 for discrete
//! len          u64
//! cursor       u64       next slot to overwrite
//! len records in storage order:
//!   state      state_dim × f64, then u64 index (u64::MAX when absent)
//!   action     u64 (discrete) or action_dim × f64 (continuous)
//!   components k × f64
//!   next_state as state
//!   done       u8
//! ```

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::mdp::{Action, RewardComponents, StateVec};
use crate::reward::{compose, ParamPool};

const MAGIC: &[u8; 8] = b"RCRLBUF1";
const NO_INDEX: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: StateVec,
    pub action: Action,
    pub components: RewardComponents,
    pub next_state: StateVec,
    pub done: bool,
}

/// Fixed-capacity ring; the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    k: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, k: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("capacity must be positive"));
        }
        Ok(Self {
            capacity,
            k,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn component_count(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.components.len() != self.k {
            return Err(Error::LengthMismatch {
                expected: self.k,
                got: t.components.len(),
            });
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `batch` uniform draws with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.items.len();
        Ok((0..batch).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(rng, batch)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let (state_dim, action_kind, action_dim) = match self.items.first() {
            Some(t) => match &t.action {
                Action::Discrete(_) => (t.state.values.len(), 0u8, 0usize),
                Action::Continuous(a) => (t.state.values.len(), 1u8, a.len()),
            },
            None => (0, 0, 0),
        };
        w.write_all(MAGIC)?;
        w.write_all(&(self.capacity as u64).to_le_bytes())?;
        w.write_all(&(self.k as u32).to_le_bytes())?;
        w.write_all(&(state_dim as u32).to_le_bytes())?;
        w.write_all(&[action_kind])?;
        w.write_all(&(action_dim as u32).to_le_bytes())?;
        w.write_all(&(self.items.len() as u64).to_le_bytes())?;
        w.write_all(&(self.cursor as u64).to_le_bytes())?;
        for t in &self.items {
            write_state(&mut w, &t.state, state_dim)?;
            match (&t.action, action_kind) {
                (Action::Discrete(a), 0) => w.write_all(&(*a as u64).to_le_bytes())?,
                (Action::Continuous(a), 1) if a.len() == action_dim => {
                    for x in a {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                _ => return Err(invalid("transitions disagree on action layout")),
            }
            for c in t.components.as_slice() {
                w.write_all(&c.to_le_bytes())?;
            }
            write_state(&mut w, &t.next_state, state_dim)?;
            w.write_all(&[t.done as u8])?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        let mut r = r;
        r.read_to_end(&mut bytes)?;
        Self::from_snapshot_bytes(&bytes)
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Parse("bad snapshot magic".into()));
        }
        let capacity = cur.u64()? as usize;
        let k = cur.u32()? as usize;
        let state_dim = cur.u32()? as usize;
        let action_kind = cur.u8()?;
        let action_dim = cur.u32()? as usize;
        let len = cur.u64()? as usize;
        let cursor = cur.u64()? as usize;
        if capacity == 0 || len > capacity || cursor >= capacity || (len < capacity && cursor != len) {
            return Err(Error::Parse("inconsistent snapshot header".into()));
        }
        let action_bytes = match action_kind {
            0 => 8,
            1 => action_dim
                .checked_mul(8)
                .ok_or_else(|| Error::Parse("action_dim overflow".into()))?,
            _ => return Err(Error::Parse(format!("unknown action kind {action_kind}"))),
        };
        let record = state_dim
            .checked_add(1)
            .and_then(|s| s.checked_mul(16))
            .and_then(|s| s.checked_add(action_bytes))
            .and_then(|s| k.checked_mul(8).and_then(|c| s.checked_add(c)))
            .and_then(|s| s.checked_add(1))
            .ok_or_else(|| Error::Parse("record size overflow".into()))?;
        if len.checked_mul(record) != Some(bytes.len() - cur.pos) {
            return Err(Error::Parse("snapshot length does not match header".into()));
        }
        let mut buf = Self::new(capacity, k)?;
        buf.items.reserve(len);
        for _ in 0..len {
            let state = cur.state(state_dim)?;
            let action = if action_kind == 0 {
                Action::Discrete(cur.u64()? as usize)
            } else {
                Action::Continuous((0..action_dim).map(|_| cur.f64()).collect::<Result<_>>()?)
            };
            let components = RewardComponents::new((0..k).map(|_| cur.f64()).collect::<Result<_>>()?)?;
            let next_state = cur.state(state_dim)?;
            let done = match cur.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Parse(format!("bad done flag {b}"))),
            };
            buf.items.push(Transition {
                state,
                action,
                components,
                next_state,
                done,
            });
        }
        buf.cursor = cursor;
        Ok(buf)
    }
}

fn write_state<W: Write>(w: &mut W, s: &StateVec, dim: usize) -> Result<()> {
    if s.values.len() != dim {
        return Err(invalid("transitions disagree on state dimension"));
    }
    for v in &s.values {
        w.write_all(&v.to_le_bytes())?;
    }
    let index = s.index.map(|i| i as u64).unwrap_or(NO_INDEX);
    w.write_all(&index.to_le_bytes())?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Parse("truncated snapshot".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("snapshot value"))
        }
    }

    fn state(&mut self, dim: usize) -> Result<StateVec> {
        let values = (0..dim).map(|_| self.f64()).collect::<Result<_>>()?;
        let index = match self.u64()? {
            NO_INDEX => None,
            i => Some(i as usize),
        };
        Ok(StateVec { values, index })
    }
}

/// Rewards of `batch` under the pool entries named by `ids`.
pub fn relabel(batch: &[&Transition], ids: &[usize], pool: &ParamPool) -> Result<Vec<f64>> {
    if batch.len() != ids.len() {
        return Err(Error::LengthMismatch {
            expected: batch.len(),
            got: ids.len(),
        });
    }
    batch
        .iter()
        .zip(ids)
        .map(|(t, id)| compose(pool.get(*id)?, t.components.as_slice()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp;
    use crate::reward::{make_arc_pool, pool_from_deltas, Parameterization};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dummy(i: usize, k: usize) -> Transition {
        Transition {
            state: StateVec {
                values: vec![i as f64],
                index: Some(i),
            },
            action: Action::Discrete(0),
            components: RewardComponents(vec![i as f64; k]),
            next_state: StateVec {
                values: vec![i as f64 + 1.0],
                index: Some(i + 1),
            },
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(4, 2).unwrap();
        assert_eq!(buf.len(), 0);
        for i in 0..5 {
            buf.push(dummy(i, 2)).unwrap();
        }
        assert_eq!(buf.len(), 4);
        assert!(buf.iter().all(|t| t.state.index != Some(0)));
        assert!(buf.push(dummy(9, 3)).is_err());
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReplayBuffer::new(8, 1).unwrap();
        assert!(matches!(buf.sample_batch(&mut rng, 1), Err(Error::EmptyBuffer)));
        buf.push(dummy(3, 1)).unwrap();
        let batch = buf.sample_batch(&mut rng, 8).unwrap();
        assert_eq!(batch.len(), 8);
        assert!(batch.iter().all(|t| **t == dummy(3, 1)));
        for i in 0..5 {
            buf.push(dummy(i + 10, 1)).unwrap();
        }
        let a = buf.sample_indices(&mut ChaCha8Rng::seed_from_u64(4), 32).unwrap();
        let b = buf.sample_indices(&mut ChaCha8Rng::seed_from_u64(4), 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_index_frequencies() {
        let mut buf = ReplayBuffer::new(10, 1).unwrap();
        for i in 0..10 {
            buf.push(dummy(i, 1)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 10];
        for i in buf.sample_indices(&mut rng, 100_000).unwrap() {
            counts[i] += 1;
        }
        for c in counts {
            assert!((c as f64 / 100_000.0 - 0.1).abs() < 0.01);
        }
    }

    #[test]
    fn relabel_against_env_rewards() {
        let mut env = mdp::make_env(mdp::GRID_ZONE).unwrap();
        let desc = env.descriptor().clone();
        let mut buf = ReplayBuffer::new(64, 3).unwrap();
        let mut rewards = Vec::new();
        let mut s = env.reset(0);
        for i in 0..20 {
            let a = Action::Discrete(i % 5);
            let step = env.step(&a).unwrap();
            rewards.push(mdp::nominal_reward(&desc, &step).unwrap());
            buf.push(Transition {
                state: s,
                action: a,
                components: step.components.clone(),
                next_state: step.next_state.clone(),
                done: step.done,
            })
            .unwrap();
            s = step.next_state;
        }
        let batch: Vec<&Transition> = buf.iter().collect();
        let pool = pool_from_deltas(&desc.nominal, vec![vec![2.0; 3]]).unwrap();
        let nominal = relabel(&batch, &[0; 20], &pool).unwrap();
        assert_eq!(nominal, rewards);
        let doubled = relabel(&batch, &[1; 20], &pool).unwrap();
        for (d, n) in doubled.iter().zip(&nominal) {
            assert_eq!(*d, 2.0 * n);
        }
        assert_eq!(relabel(&batch, &[1; 20], &pool).unwrap(), doubled);
        assert!(matches!(relabel(&batch, &[2; 20], &pool), Err(Error::UnknownId(2))));
        assert!(relabel(&batch, &[0; 3], &pool).is_err());
    }

    #[test]
    fn relabel_speed_target() {
        let mut env = mdp::make_env(mdp::SPEED_CHAIN).unwrap();
        let pool = make_arc_pool(env.as_mut(), 0).unwrap();
        let chain = mdp::SpeedChain::default();
        let out = chain.transition(chain.join(0, 2), mdp::SpeedChain::HOLD).unwrap();
        let t = Transition {
            state: chain.decode(chain.join(0, 2)),
            action: Action::Discrete(mdp::SpeedChain::HOLD),
            components: RewardComponents(out.components),
            next_state: chain.decode(out.next),
            done: false,
        };
        let target2 = pool
            .iter()
            .find(|p| p.psi == Parameterization::one_hot(4, 2).psi)
            .unwrap()
            .id;
        assert_eq!(relabel(&[&t], &[target2], &pool).unwrap(), vec![1.0]);
    }

    use mdp::DiscreteModel;

    #[test]
    fn snapshot_round_trip() {
        let mut buf = ReplayBuffer::new(3, 2).unwrap();
        for i in 0..5 {
            let mut t = dummy(i, 2);
            t.action = Action::Continuous(vec![0.5, -0.25 * i as f64]);
            t.state.index = None;
            t.done = i % 2 == 0;
            buf.push(t).unwrap();
        }
        let mut bytes = Vec::new();
        buf.write_snapshot(&mut bytes).unwrap();
        let back = ReplayBuffer::read_snapshot(&bytes[..]).unwrap();
        assert_eq!(back.capacity(), 3);
        assert_eq!(back.cursor, buf.cursor);
        assert_eq!(back.items, buf.items);
        assert!(ReplayBuffer::from_snapshot_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ReplayBuffer::from_snapshot_bytes(&bad).is_err());
    }
}
