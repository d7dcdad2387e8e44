use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slicelab_nn::{Mlp, HIDDEN_WIDTH};

use super::agent::Agent;
use crate::env::{obs_dim, obs_schema_hash, NormConstants};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "slicelab-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained networks plus what is needed to use them safely elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub algorithm: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Set for slicing agents; toy problems leave these empty.
    pub num_slices: Option<usize>,
    pub obs_schema_hash: Option<String>,
    pub norms: Option<NormConstants>,
    pub actor: Mlp<f32>,
    pub critics: [Mlp<f32>; 2],
    pub log_alpha: f64,
    pub train_steps: u64,
    pub seed: u64,
    /// Free-form provenance: configs, dataset hashes, tool version.
    pub provenance: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent, algorithm: &str, train_steps: u64, seed: u64) -> Self {
        let mut provenance = BTreeMap::new();
        provenance.insert("tool".into(), format!("slicelab {}", env!("CARGO_PKG_VERSION")));
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            algorithm: algorithm.into(),
            obs_dim: agent.obs_dim,
            act_dim: agent.act_dim,
            num_slices: None,
            obs_schema_hash: None,
            norms: None,
            actor: agent.actor.clone(),
            critics: agent.critics.clone(),
            log_alpha: agent.log_alpha,
            train_steps,
            seed,
            provenance,
        }
    }

    /// Tag as a slicing agent for `num_slices` slices.
    pub fn for_slicing(mut self, num_slices: usize, norms: NormConstants) -> Self {
        self.num_slices = Some(num_slices);
        self.obs_schema_hash = Some(obs_schema_hash(num_slices));
        self.norms = Some(norms);
        self
    }

    pub fn with_provenance(mut self, key: &str, value: impl Into<String>) -> Self {
        self.provenance.insert(key.into(), value.into());
        self
    }

    /// Agent with fresh optimizers around the stored networks.
    pub fn to_agent(&self) -> Agent {
        Agent::from_networks(self.actor.clone(), self.critics.clone(), self.log_alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Checkpoint(m));
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return fail(format!("unsupported checkpoint {} v{}", self.format, self.version));
        }
        let actor = [self.obs_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, 2 * self.act_dim];
        if self.actor.widths() != actor {
            return fail(format!("actor widths {:?}, expected {actor:?}", self.actor.widths()));
        }
        let critic = [self.obs_dim + self.act_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, 1];
        for c in &self.critics {
            if c.widths() != critic {
                return fail(format!("critic widths {:?}, expected {critic:?}", c.widths()));
            }
        }
        for net in std::iter::once(&self.actor).chain(&self.critics) {
            Mlp::from_parts(net.widths(), net.params().to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        if let Some(n) = self.num_slices {
            if self.obs_dim != obs_dim(n) || self.act_dim != n - 1 {
                return fail(format!("dimensions {}x{} do not fit {n} slices", self.obs_dim, self.act_dim));
            }
            if self.obs_schema_hash.as_deref() != Some(obs_schema_hash(n).as_str()) {
                return fail("observation schema hash does not match this build".into());
            }
        }
        Ok(())
    }

    /// Error unless the checkpoint was trained for `num_slices` slices.
    pub fn check_slices(&self, num_slices: usize) -> Result<()> {
        match self.num_slices {
            Some(n) if n == num_slices => Ok(()),
            Some(n) => Err(Error::Checkpoint(format!("checkpoint is for {n} slices, environment has {num_slices}"))),
            None => Err(Error::Checkpoint("checkpoint was not trained on the slicing environment".into())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Hash of the network parameters only.
    pub fn weights_hash(&self) -> String {
        let mut h = Sha256::new();
        for net in std::iter::once(&self.actor).chain(&self.critics) {
            for p in net.params() {
                h.update(p.to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agent = Agent::new(15, 2, 0.2, &mut rng);
        let ck = Checkpoint::from_agent(&agent, "sac", 10, 5).for_slicing(3, NormConstants::default());
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.weights_hash(), ck.weights_hash());
    }

    #[test]
    fn schema_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agent = Agent::new(15, 2, 0.2, &mut rng);
        let ck = Checkpoint::from_agent(&agent, "cql", 0, 0).for_slicing(3, NormConstants::default());
        ck.check_slices(3).unwrap();
        assert!(matches!(ck.check_slices(4), Err(Error::Checkpoint(_))));
        let mut bad = ck.clone();
        bad.num_slices = Some(4);
        assert!(bad.validate().is_err());
    }
}
