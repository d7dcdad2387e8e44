//! Ready-made experiment specs: cross-SLA transfer and reward variants.

use super::experiment::{CollectStage, ExperimentSpec, TrainStage};
use super::table::ResultTable;
use crate::env::RewardParams;
use crate::error::{Error, Result};

/// Train on data collected at some thresholds of one slice, evaluate at
/// another.
#[derive(Debug, Clone)]
pub struct SlaTransferPlan {
    pub base: ExperimentSpec,
    /// Index of the slice whose threshold varies.
    pub slice: usize,
    pub train_thresholds_ms: Vec<f64>,
    pub eval_threshold_ms: f64,
    pub behavior_policies: Vec<String>,
    pub episodes_per_policy: usize,
    pub cql_steps: u64,
    pub cql_config: Option<toml::Table>,
    /// Also train SAC online at the evaluation threshold.
    pub online_sac_steps: Option<u64>,
    pub seeds: Vec<u64>,
}

impl SlaTransferPlan {
    pub fn new(base: ExperimentSpec, train_thresholds_ms: Vec<f64>, eval_threshold_ms: f64) -> Self {
        Self {
            base,
            slice: 0,
            train_thresholds_ms,
            eval_threshold_ms,
            behavior_policies: vec!["load".into(), "delay".into()],
            episodes_per_policy: 10,
            cql_steps: 20_000,
            cql_config: None,
            online_sac_steps: None,
            seeds: Vec::new(),
        }
    }

    fn thresholds(&self, value: f64) -> Vec<f64> {
        let mut t = self.base.sim.delay_thresholds_ms.clone();
        t[self.slice] = value;
        t
    }

    pub fn spec(&self) -> Result<ExperimentSpec> {
        if self.slice + 1 >= self.base.sim.num_slices {
            return Err(Error::config(format!("slice {} is not a prioritized slice", self.slice)));
        }
        let mut spec = self.base.clone();
        spec.collect.clear();
        spec.train.clear();
        let mut names = Vec::new();
        for &th in &self.train_thresholds_ms {
            for p in &self.behavior_policies {
                let name = format!("{p}_{th}ms");
                spec.collect.push(CollectStage {
                    name: name.clone(),
                    policy: p.clone(),
                    episodes: self.episodes_per_policy,
                    seed: None,
                    delay_thresholds_ms: Some(self.thresholds(th)),
                    stochastic: false,
                });
                names.push(name);
            }
        }
        spec.train.push(TrainStage {
            name: "cql".into(),
            algorithm: "cql".into(),
            steps: self.cql_steps,
            seeds: self.seeds.clone(),
            datasets: names,
            reward: None,
            delay_thresholds_ms: None,
            config: self.cql_config.clone(),
        });
        let eval_t = self.thresholds(self.eval_threshold_ms);
        if let Some(steps) = self.online_sac_steps {
            spec.train.push(TrainStage {
                name: "sac_online".into(),
                algorithm: "sac".into(),
                steps,
                seeds: self.seeds.clone(),
                datasets: vec![],
                reward: None,
                delay_thresholds_ms: Some(eval_t.clone()),
                config: None,
            });
        }
        spec.eval.delay_thresholds_ms = Some(eval_t);
        Ok(spec)
    }
}

/// `(name, alpha, delta)` of the three reward variants.
pub const PAPER_REWARD_VARIANTS: [(&str, f64, f64); 3] =
    [("cql_delay", 4.0, 1.0), ("cql_throughput", 0.5, 0.5), ("cql_resource", 1.0, 4.0)];

/// One CQL policy per reward variant, all trained on the same data.
pub fn reward_variant_spec(
    base: &ExperimentSpec,
    datasets: Vec<String>,
    variants: &[(String, f64, f64)],
    steps: u64,
    seeds: Vec<u64>,
    config: Option<toml::Table>,
) -> ExperimentSpec {
    let mut spec = base.clone();
    spec.train = variants
        .iter()
        .map(|(name, alpha, delta)| TrainStage {
            name: name.clone(),
            algorithm: "cql".into(),
            steps,
            seeds: seeds.clone(),
            datasets: datasets.clone(),
            reward: Some(RewardParams::with_weights(base.sim.num_slices, *alpha, *delta)),
            delay_thresholds_ms: None,
            config: config.clone(),
        })
        .collect();
    spec
}

/// Ordering checks on a reward-variant table: the throughput variant should
/// carry the highest throughput and the delay variant the lowest violation
/// rate among `variants`. Returns one message per broken expectation.
pub fn reward_variant_flags(table: &ResultTable, variants: &[&str], throughput: &str, delay: &str) -> Vec<String> {
    let rows: Vec<_> = table.rows.iter().filter(|r| variants.contains(&r.policy.as_str())).collect();
    let mut flags = Vec::new();
    if let Some(best) = rows.iter().max_by(|a, b| a.throughput_mbps.mean.total_cmp(&b.throughput_mbps.mean)) {
        if best.policy != throughput {
            flags.push(format!("{throughput} is not the max-throughput row ({} is)", best.policy));
        }
    }
    if let Some(best) = rows.iter().min_by(|a, b| a.d_vio_pct.mean.total_cmp(&b.d_vio_pct.mean)) {
        if best.policy != delay {
            flags.push(format!("{delay} is not the min-violation row ({} is)", best.policy));
        }
    }
    flags
}
