//! Allocation policies behind one interface, constructed by name.
//!
//! A policy spec is `name` or `name:argument`, e.g. `load`, `delay`,
//! `uniform` or `checkpoint:runs/cql/actor.json`.

mod actor;
mod baselines;

use std::collections::BTreeMap;

use rand::RngCore;

pub use actor::ActorPolicy;
pub use baselines::{
    delay_based, initial_shares, load_based, BaselineState, DelayPolicy, FixedPolicy, LoadPolicy, LOAD_DELTA,
};

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::sim::SliceMetrics;

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Whether `act` ignores the RNG.
    fn deterministic(&self) -> bool {
        true
    }

    /// Forget per-episode state.
    fn reset(&mut self) {}

    /// Shares for the prioritized slices given the current observation and
    /// the raw metrics it was built from. Entries lie in `[0,1]`.
    fn act(&mut self, obs: &Observation, raw: &[SliceMetrics], rng: &mut dyn RngCore) -> Vec<f64>;
}

/// What a factory gets to build a policy.
#[derive(Debug, Clone)]
pub struct PolicyArgs<'a> {
    pub num_slices: usize,
    pub argument: Option<&'a str>,
    pub deterministic: bool,
}

pub type PolicyFactory = Box<dyn Fn(&PolicyArgs<'_>) -> Result<Box<dyn Policy>> + Send + Sync>;

pub struct PolicyRegistry {
    factories: BTreeMap<String, PolicyFactory>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("load", |a| Ok(Box::new(LoadPolicy::new(a.num_slices))));
        reg.register("delay", |a| Ok(Box::new(DelayPolicy::new(a.num_slices))));
        reg.register("uniform", |a| Ok(Box::new(FixedPolicy::uniform(a.num_slices))));
        reg.register("checkpoint", |a| {
            let path = a.argument.ok_or_else(|| Error::config("checkpoint policy needs a path: checkpoint:<file>"))?;
            let policy = ActorPolicy::from_file(path, a.deterministic)?;
            policy.check_slices(a.num_slices)?;
            Ok(Box::new(policy))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&PolicyArgs<'_>) -> Result<Box<dyn Policy>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, spec: &str, num_slices: usize, deterministic: bool) -> Result<Box<dyn Policy>> {
        let (name, argument) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self.factories.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::config(format!("unknown policy '{name}', known: {}", known.join(", ")))
        })?;
        factory(&PolicyArgs { num_slices, argument, deterministic })
    }
}
