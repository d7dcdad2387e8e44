use serde::{Deserialize, Serialize};

use crate::algos::stream;
use crate::env::{EpisodeConfig, NormConstants, RewardParams, SlicingEnv};
use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::sim::SimConfig;

/// Total prioritized UE counts of the default suite.
pub const DEFAULT_UE_TOTALS: [usize; 5] = [6, 9, 12, 16, 20];
/// Seeds of the default suite.
pub const DEFAULT_EVAL_SEEDS: [u64; 4] = [9001, 9002, 9003, 9004];

const EVAL_POLICY_STREAM: u64 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalEntry {
    /// Prioritized UE counts; the background count comes from the context.
    pub ue_counts: Vec<usize>,
    pub seed: u64,
}

/// The set of environments every policy is scored on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub entries: Vec<EvalEntry>,
}

/// `total` UEs over `k` slices as evenly as possible, larger shares first.
pub fn even_split(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| total / k + usize::from(i < total % k)).collect()
}

impl EvalSuite {
    /// Five UE populations times four seeds.
    pub fn default_for(num_slices: usize) -> Self {
        Self::from_totals(&DEFAULT_UE_TOTALS, &DEFAULT_EVAL_SEEDS, num_slices)
    }

    pub fn from_totals(totals: &[usize], seeds: &[u64], num_slices: usize) -> Self {
        let entries = totals
            .iter()
            .flat_map(|&t| seeds.iter().map(move |&seed| EvalEntry { ue_counts: even_split(t, num_slices - 1), seed }))
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.entries.iter().enumerate() {
            if self.entries[..i].contains(a) {
                return Err(Error::config(format!("evaluation suite repeats {a:?}")));
            }
        }
        Ok(())
    }
}

/// Everything about the environments except the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    pub sim: SimConfig,
    pub reward: RewardParams,
    pub norms: NormConstants,
    pub background_ues: usize,
    /// Per-slice thresholds; `None` keeps the simulator's.
    pub delay_thresholds_ms: Option<Vec<f64>>,
}

impl EvalContext {
    pub fn new(sim: SimConfig, reward: RewardParams, norms: NormConstants) -> Self {
        Self { sim, reward, norms, background_ues: 5, delay_thresholds_ms: None }
    }

    pub fn episode(&self, entry: &EvalEntry) -> EpisodeConfig {
        EpisodeConfig {
            background_ues: self.background_ues,
            ue_counts: Some(entry.ue_counts.clone()),
            delay_thresholds_ms: self.delay_thresholds_ms.clone(),
            seed: entry.seed,
            ..Default::default()
        }
    }

    /// Thresholds the episodes actually run with.
    pub fn thresholds(&self) -> Vec<f64> {
        self.delay_thresholds_ms.clone().unwrap_or_else(|| self.sim.delay_thresholds_ms.clone())
    }
}

/// One episode's summary, averaged over its steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvResult {
    pub entry: EvalEntry,
    /// Per prioritized slice, percent.
    pub d_vio_pct: Vec<f64>,
    /// Summed prioritized throughput, Mb/s.
    pub throughput_mbps: f64,
    /// Summed prioritized utilization, percent of the RBG-TTIs.
    pub usage_pct: f64,
    pub episode_return: f64,
}

impl EnvResult {
    pub fn mean_d_vio_pct(&self) -> f64 {
        self.d_vio_pct.iter().sum::<f64>() / self.d_vio_pct.len() as f64
    }
}

/// Run `policy` once on `entry`.
pub fn run_entry(policy: &mut dyn Policy, ctx: &EvalContext, entry: &EvalEntry) -> Result<EnvResult> {
    let mut env = SlicingEnv::new(ctx.sim.clone(), ctx.reward.clone(), ctx.norms)?;
    let k = ctx.sim.num_slices - 1;
    let mut obs = env.reset(&ctx.episode(entry))?;
    policy.reset();
    let mut rng = stream(entry.seed, EVAL_POLICY_STREAM);
    let (mut vio, mut thr, mut usage, mut ret, mut steps) = (vec![0.0; k], 0.0, 0.0, 0.0, 0usize);
    loop {
        let action = policy.act(&obs, env.last_raw(), &mut rng);
        let out = env.step(&action)?;
        for (s, m) in out.raw[..k].iter().enumerate() {
            vio[s] += m.d_vio;
            thr += m.t_rx;
            usage += m.util;
        }
        ret += out.reward;
        steps += 1;
        obs = out.observation;
        if out.done {
            break;
        }
    }
    let t = steps as f64;
    Ok(EnvResult {
        entry: entry.clone(),
        d_vio_pct: vio.iter().map(|v| 100.0 * v / t).collect(),
        throughput_mbps: thr / t,
        usage_pct: 100.0 * usage / t,
        episode_return: ret,
    })
}

/// Mean and standard deviation over environments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Sample standard deviation; 0 for fewer than two values.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Aggregates of one policy over a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub envs: usize,
    pub d_vio_pct: Stat,
    pub slice_d_vio_pct: Vec<Stat>,
    pub throughput_mbps: Stat,
    pub usage_pct: Stat,
    pub episode_return: Stat,
    pub per_env: Vec<EnvResult>,
}

impl ResultRow {
    pub fn from_results(policy: &str, per_env: Vec<EnvResult>) -> Self {
        let col = |f: &dyn Fn(&EnvResult) -> f64| Stat::of(&per_env.iter().map(f).collect::<Vec<_>>());
        let k = per_env.first().map_or(0, |r| r.d_vio_pct.len());
        Self {
            policy: policy.to_string(),
            envs: per_env.len(),
            d_vio_pct: col(&|r| r.mean_d_vio_pct()),
            slice_d_vio_pct: (0..k).map(|s| col(&|r| r.d_vio_pct[s])).collect(),
            throughput_mbps: col(&|r| r.throughput_mbps),
            usage_pct: col(&|r| r.usage_pct),
            episode_return: col(&|r| r.episode_return),
            per_env,
        }
    }
}

/// Score `policy` on every suite entry, in suite order.
pub fn evaluate(policy: &mut dyn Policy, suite: &EvalSuite, ctx: &EvalContext) -> Result<ResultRow> {
    suite.validate()?;
    let per_env = suite.entries.iter().map(|e| run_entry(policy, ctx, e)).collect::<Result<Vec<_>>>()?;
    Ok(ResultRow::from_results(policy.name(), per_env))
}
