//! Online SAC and offline CQL with twin critics and target networks.
//!
//! Trainers sit behind [`Trainer`] and are built by name from a
//! [`TrainerRegistry`], so experiment configs can pick `sac` or `cql`.

mod agent;
mod checkpoint;
mod envs;
pub mod losses;
mod replay;
mod train;

use std::collections::BTreeMap;

pub use agent::{
    cql_update, sac_update, td_target, Agent, CqlConfig, SacConfig, UpdateStats, ACTOR_OUTPUT_SCALE,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use envs::{Environment, QuadraticBandit, SlicingTask};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{
    initial_agent, run_episode, stream, train_offline, train_online, EpisodeEvaluator, Evaluator, LogRow, TrainLog,
    TrainOutput, TRAIN_LOG_HEADER,
};

use crate::error::{Error, Result};

/// What a trainer learns from.
pub enum TrainingData<'a> {
    Environment(&'a mut dyn Environment),
    Transitions(&'a [Transition]),
}

pub trait Trainer {
    fn name(&self) -> &str;
    /// Whether the trainer needs an environment rather than transitions.
    fn online(&self) -> bool;
    /// Effective configuration, for manifests.
    fn config_json(&self) -> String;
    fn train(
        &self,
        data: TrainingData<'_>,
        total_steps: u64,
        seed: u64,
        evaluator: Option<&mut dyn Evaluator>,
    ) -> Result<TrainOutput>;
}

pub struct SacTrainer(pub SacConfig);

impl Trainer for SacTrainer {
    fn name(&self) -> &str {
        "sac"
    }

    fn online(&self) -> bool {
        true
    }

    fn config_json(&self) -> String {
        serde_json::to_string(&self.0).expect("config serializes")
    }

    fn train(
        &self,
        data: TrainingData<'_>,
        total_steps: u64,
        seed: u64,
        evaluator: Option<&mut dyn Evaluator>,
    ) -> Result<TrainOutput> {
        match data {
            TrainingData::Environment(env) => train_online(env, &self.0, total_steps, seed, evaluator),
            TrainingData::Transitions(_) => Err(Error::config("sac trains online and needs an environment")),
        }
    }
}

pub struct CqlTrainer(pub CqlConfig);

impl Trainer for CqlTrainer {
    fn name(&self) -> &str {
        "cql"
    }

    fn online(&self) -> bool {
        false
    }

    fn config_json(&self) -> String {
        serde_json::to_string(&self.0).expect("config serializes")
    }

    fn train(
        &self,
        data: TrainingData<'_>,
        total_steps: u64,
        seed: u64,
        evaluator: Option<&mut dyn Evaluator>,
    ) -> Result<TrainOutput> {
        match data {
            TrainingData::Transitions(t) => train_offline(t, &self.0, total_steps, seed, evaluator),
            TrainingData::Environment(_) => Err(Error::config("cql trains offline and needs a dataset")),
        }
    }
}

/// Builds a trainer from optional config overrides.
pub type TrainerFactory = Box<dyn Fn(Option<&toml::Table>) -> Result<Box<dyn Trainer>> + Send + Sync>;

pub struct TrainerRegistry {
    factories: BTreeMap<String, TrainerFactory>,
}

impl Default for TrainerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn parse_config<T: serde::de::DeserializeOwned + Default>(table: Option<&toml::Table>) -> Result<T> {
    match table {
        None => Ok(T::default()),
        Some(t) => toml::Value::Table(t.clone()).try_into().map_err(|e| Error::config(e.to_string())),
    }
}

impl TrainerRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("sac", |t| {
            let cfg: SacConfig = parse_config(t)?;
            cfg.validate()?;
            Ok(Box::new(SacTrainer(cfg)))
        });
        reg.register("cql", |t| {
            let cfg: CqlConfig = parse_config(t)?;
            cfg.validate()?;
            Ok(Box::new(CqlTrainer(cfg)))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(Option<&toml::Table>) -> Result<Box<dyn Trainer>> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, config: Option<&toml::Table>) -> Result<Box<dyn Trainer>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::config(format!("unknown algorithm '{name}', known: {}", self.names().collect::<Vec<_>>().join(", ")))
        })?;
        factory(config)
    }
}
