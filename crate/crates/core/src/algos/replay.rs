use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// One learning transition with its reward already materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// A minibatch in flat row-major `f32` arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_obs: Vec<f32>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Ring buffer of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_obs: Vec<f32>,
    dones: Vec<bool>,
    len: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            rewards: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            dones: vec![false; capacity],
            len: 0,
            head: 0,
        }
    }

    /// A buffer holding exactly `transitions`.
    pub fn from_transitions(transitions: &[Transition]) -> Result<Self> {
        let first = transitions.first().ok_or_else(|| Error::config("no transitions to learn from"))?;
        let mut buf = Self::new(transitions.len(), first.obs.len(), first.action.len());
        for t in transitions {
            buf.push(t)?;
        }
        Ok(buf)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(Error::Validation(format!(
                "transition widths obs {}/{} action {} do not match buffer obs {} action {}",
                t.obs.len(),
                t.next_obs.len(),
                t.action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        let i = self.head;
        let (o, a) = (self.obs_dim, self.act_dim);
        copy_into(&mut self.obs[i * o..(i + 1) * o], &t.obs);
        copy_into(&mut self.actions[i * a..(i + 1) * a], &t.action);
        copy_into(&mut self.next_obs[i * o..(i + 1) * o], &t.next_obs);
        self.rewards[i] = t.reward as f32;
        self.dones[i] = t.done;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// `size` indices drawn uniformly with replacement.
    pub fn sample(&self, size: usize, rng: &mut dyn RngCore) -> Batch {
        assert!(self.len > 0, "sampling from an empty buffer");
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut batch = Batch {
            obs: Vec::with_capacity(size * o),
            actions: Vec::with_capacity(size * a),
            rewards: Vec::with_capacity(size),
            next_obs: Vec::with_capacity(size * o),
            dones: Vec::with_capacity(size),
        };
        for _ in 0..size {
            let i = rng.random_range(0..self.len);
            batch.obs.extend_from_slice(&self.obs[i * o..(i + 1) * o]);
            batch.actions.extend_from_slice(&self.actions[i * a..(i + 1) * a]);
            batch.next_obs.extend_from_slice(&self.next_obs[i * o..(i + 1) * o]);
            batch.rewards.push(self.rewards[i]);
            batch.dones.push(self.dones[i]);
        }
        batch
    }
}

fn copy_into(dst: &mut [f32], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = s as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(v: f64) -> Transition {
        Transition { obs: vec![v, v], action: vec![v], reward: v, next_obs: vec![v + 1.0, v + 1.0], done: false }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3, 2, 1);
        for i in 0..5 {
            buf.push(&transition(i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = buf.sample(200, &mut rng);
        assert!(batch.rewards.iter().all(|&r| r >= 2.0));
        for b in 0..batch.len() {
            assert_eq!(batch.obs[2 * b], batch.rewards[b]);
            assert_eq!(batch.next_obs[2 * b], batch.rewards[b] + 1.0);
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let mut buf = ReplayBuffer::new(3, 2, 1);
        let mut t = transition(0.0);
        t.action.push(1.0);
        assert!(buf.push(&t).is_err());
    }

    proptest! {
        #[test]
        fn size_never_exceeds_capacity(cap in 1usize..20, pushes in 0usize..60) {
            let mut buf = ReplayBuffer::new(cap, 2, 1);
            for i in 0..pushes {
                buf.push(&transition(i as f64)).unwrap();
            }
            prop_assert_eq!(buf.len(), pushes.min(cap));
        }
    }
}
