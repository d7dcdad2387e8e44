//! The episodic interface the online trainer talks to.

use crate::env::{EpisodeConfig, SlicingEnv};
use crate::error::{Error, Result};

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Start an episode from `seed` and return the first observation.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    /// Returns `(next_obs, reward, done)`.
    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)>;
}

/// One state, reward `-(a - target)^2` per dimension, episodes of
/// `horizon` steps.
#[derive(Debug, Clone)]
pub struct QuadraticBandit {
    pub target: f64,
    pub horizon: usize,
    steps: usize,
    running: bool,
}

impl QuadraticBandit {
    pub fn new(target: f64, horizon: usize) -> Self {
        Self { target, horizon, steps: 0, running: false }
    }
}

impl Environment for QuadraticBandit {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        self.steps = 0;
        self.running = true;
        Ok(vec![1.0])
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        if !self.running {
            return Err(Error::Protocol("step on a finished episode".into()));
        }
        self.steps += 1;
        let done = self.steps >= self.horizon;
        self.running = !done;
        let a = action[0].clamp(0.0, 1.0);
        Ok((vec![1.0], -(a - self.target).powi(2), done))
    }
}

/// The slicing environment with per-episode randomization taken from a
/// template whose seed is replaced on every reset.
#[derive(Debug, Clone)]
pub struct SlicingTask {
    pub env: SlicingEnv,
    pub episode: EpisodeConfig,
}

impl SlicingTask {
    pub fn new(env: SlicingEnv, episode: EpisodeConfig) -> Self {
        Self { env, episode }
    }
}

impl Environment for SlicingTask {
    fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.env.reset(&self.episode.with_seed(seed))?.0)
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        let out = self.env.step(action)?;
        Ok((out.observation.0, out.reward, out.done))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandit_reward_peaks_at_target() {
        let mut env = QuadraticBandit::new(0.7, 1);
        env.reset(0).unwrap();
        let (_, r, done) = env.step(&[0.7]).unwrap();
        assert_eq!(r, 0.0);
        assert!(done);
        assert!(env.step(&[0.7]).is_err());
        env.reset(0).unwrap();
        assert!((env.step(&[0.2]).unwrap().1 + 0.25).abs() < 1e-12);
    }
}
