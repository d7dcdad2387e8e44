use std::path::Path;

use rand::RngCore;

use super::Policy;
use crate::algos::{Agent, Checkpoint};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::sim::SliceMetrics;

/// A trained actor used as an allocation policy.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    name: String,
    checkpoint: Checkpoint,
    agent: Agent,
    deterministic: bool,
}

impl ActorPolicy {
    pub fn new(checkpoint: Checkpoint, deterministic: bool) -> Result<Self> {
        checkpoint.validate()?;
        if checkpoint.num_slices.is_none() {
            return Err(Error::Checkpoint("checkpoint carries no observation schema".into()));
        }
        Ok(Self {
            name: checkpoint.algorithm.clone(),
            agent: checkpoint.to_agent(),
            checkpoint,
            deterministic,
        })
    }

    pub fn from_file(path: impl AsRef<Path>, deterministic: bool) -> Result<Self> {
        Self::new(Checkpoint::load(path.as_ref())?, deterministic)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn check_slices(&self, num_slices: usize) -> Result<()> {
        self.checkpoint.check_slices(num_slices)
    }
}

impl Policy for ActorPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn deterministic(&self) -> bool {
        self.deterministic
    }

    fn act(&mut self, obs: &Observation, _raw: &[SliceMetrics], rng: &mut dyn RngCore) -> Vec<f64> {
        assert_eq!(obs.0.len(), self.agent.obs_dim, "observation width does not match the checkpoint");
        if self.deterministic {
            self.agent.act_deterministic(&obs.0)
        } else {
            self.agent.act_stochastic(&obs.0, rng)
        }
    }
}
