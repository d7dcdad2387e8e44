//! Episodic decision-process view of the simulator.
//!
//! Observations are slice-major blocks of
//! `(t_rx_norm, t_tx_norm, util, d_vio, d_avg_norm)`, every entry in `[0,1]`.
//! The reward is `sum_i p_i (t_rx_norm_i - alpha d_vio_i - delta util_i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::{AllocationPlan, SimConfig, SimState, SliceMetrics};

/// Per-slice observation fields, in order.
pub const OBS_FIELDS: [&str; 5] = ["t_rx_norm", "t_tx_norm", "util", "d_vio", "d_avg_norm"];
pub const OBS_FIELDS_PER_SLICE: usize = OBS_FIELDS.len();
/// Bumped whenever the observation layout changes.
pub const OBS_SCHEMA_VERSION: u32 = 1;

/// Canonical description of the observation layout for `num_slices`.
pub fn obs_schema(num_slices: usize) -> String {
    let fields: Vec<String> =
        (0..num_slices).flat_map(|s| OBS_FIELDS.iter().map(move |f| format!("slice{}.{f}", s + 1))).collect();
    format!("v{OBS_SCHEMA_VERSION};{}", fields.join(","))
}

/// Short hash of [`obs_schema`], stored in dataset headers and checkpoints.
pub fn obs_schema_hash(num_slices: usize) -> String {
    let digest = Sha256::digest(obs_schema(num_slices).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn obs_dim(num_slices: usize) -> usize {
    num_slices * OBS_FIELDS_PER_SLICE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_slices(&self) -> usize {
        self.0.len() / OBS_FIELDS_PER_SLICE
    }

    pub fn slice_block(&self, slice: usize) -> &[f64] {
        &self.0[slice * OBS_FIELDS_PER_SLICE..(slice + 1) * OBS_FIELDS_PER_SLICE]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConstants {
    /// Throughput and load scale, Mb/s.
    pub rate_cap: f64,
    /// Delay scale, ms.
    pub delay_cap: f64,
}

impl Default for NormConstants {
    /// 20 prioritized UEs at 2 Mb/s, and the histogram range.
    fn default() -> Self {
        Self { rate_cap: 40.0, delay_cap: 500.0 }
    }
}

impl NormConstants {
    /// Rate cap sized for the largest prioritized UE population.
    pub fn for_load(max_prioritized_ues: usize, per_ue_rate_bps: f64) -> Self {
        Self { rate_cap: max_prioritized_ues as f64 * per_ue_rate_bps / 1e6, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_cap > 0.0 && self.delay_cap > 0.0) {
            return Err(Error::config(format!("normalization caps must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Map one slice's raw metrics onto `[0,1]`.
pub fn normalize(raw: &SliceMetrics, norms: &NormConstants) -> [f64; OBS_FIELDS_PER_SLICE] {
    let unit = |v: f64| v.clamp(0.0, 1.0);
    [
        unit(raw.t_rx / norms.rate_cap),
        unit(raw.t_tx / norms.rate_cap),
        unit(raw.util),
        unit(raw.d_vio),
        unit(raw.d_avg / norms.delay_cap),
    ]
}

pub fn observe(raw: &[SliceMetrics], norms: &NormConstants) -> Observation {
    Observation(raw.iter().flat_map(|m| normalize(m, norms)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    /// Slice priorities, summing to 1.
    pub priorities: Vec<f64>,
    /// Weight of the delay-violation term.
    pub alpha: f64,
    /// Weight of the utilization term.
    pub delta: f64,
}

impl RewardParams {
    /// Equal priority on the prioritized slices, none on the background,
    /// `alpha = 4`, `delta = 1`.
    pub fn standard(num_slices: usize) -> Self {
        Self::with_weights(num_slices, 4.0, 1.0)
    }

    pub fn with_weights(num_slices: usize, alpha: f64, delta: f64) -> Self {
        let k = (num_slices - 1) as f64;
        let mut priorities = vec![1.0 / k; num_slices - 1];
        priorities.push(0.0);
        Self { priorities, alpha, delta }
    }

    pub fn validate(&self, num_slices: usize) -> Result<()> {
        if self.priorities.len() != num_slices {
            return Err(Error::config(format!(
                "priority vector has {} entries for {num_slices} slices",
                self.priorities.len()
            )));
        }
        if self.priorities.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::config("priorities must be non-negative"));
        }
        let sum: f64 = self.priorities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("priorities must sum to 1, got {sum}")));
        }
        if !(self.alpha >= 0.0 && self.delta >= 0.0) {
            return Err(Error::config("alpha and delta must be non-negative"));
        }
        Ok(())
    }
}

/// Priority-weighted reward of one interval. Throughput enters normalized,
/// violation and utilization raw (both are already fractions).
pub fn reward_of(raw: &[SliceMetrics], params: &RewardParams, norms: &NormConstants) -> f64 {
    raw.iter()
        .zip(&params.priorities)
        .map(|(m, p)| {
            let t_rx = (m.t_rx / norms.rate_cap).clamp(0.0, 1.0);
            p * (t_rx - params.alpha * m.d_vio - params.delta * m.util)
        })
        .sum()
}

/// Per-episode randomization of the UE population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Inclusive range for the total number of prioritized UEs.
    pub prioritized_ue_range: [usize; 2],
    pub background_ues: usize,
    /// Fixed prioritized UE counts; overrides the random draw.
    pub ue_counts: Option<Vec<usize>>,
    /// Per-slice thresholds; `None` keeps the simulator template's.
    pub delay_thresholds_ms: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            prioritized_ue_range: [6, 20],
            background_ues: 5,
            ue_counts: None,
            delay_thresholds_ms: None,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self, num_slices: usize) -> Result<()> {
        let k = num_slices - 1;
        let [lo, hi] = self.prioritized_ue_range;
        if let Some(counts) = &self.ue_counts {
            if counts.len() != k {
                return Err(Error::config(format!("ue_counts needs {k} prioritized entries, got {}", counts.len())));
            }
        } else if lo > hi || lo < k {
            return Err(Error::config(format!(
                "prioritized_ue_range {:?} must be ordered with at least one UE per prioritized slice",
                self.prioritized_ue_range
            )));
        }
        if let Some(t) = &self.delay_thresholds_ms {
            if t.len() != num_slices {
                return Err(Error::config(format!("delay_thresholds_ms needs {num_slices} entries")));
            }
        }
        Ok(())
    }

    /// Prioritized UE counts for this episode: a uniform total in the range,
    /// split by a uniformly random composition with every slice non-empty.
    pub fn draw_ue_counts(&self, num_slices: usize) -> Vec<usize> {
        if let Some(counts) = &self.ue_counts {
            return counts.clone();
        }
        let k = num_slices - 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(17);
        let [lo, hi] = self.prioritized_ue_range;
        let total = rng.random_range(lo..=hi);
        // k-1 distinct cut points in 1..total
        let mut cuts: Vec<usize> = Vec::with_capacity(k + 1);
        while cuts.len() < k - 1 {
            let c = rng.random_range(1..total);
            if !cuts.contains(&c) {
                cuts.push(c);
            }
        }
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(total);
        cuts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Simulator configuration for this episode.
    pub fn materialize(&self, template: &SimConfig) -> Result<SimConfig> {
        self.validate(template.num_slices)?;
        let mut cfg = template.clone();
        let mut counts = self.draw_ue_counts(template.num_slices);
        counts.push(self.background_ues);
        cfg.ue_counts = counts;
        if let Some(t) = &self.delay_thresholds_ms {
            cfg.delay_thresholds_ms = t.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub raw: Vec<SliceMetrics>,
}

/// One slicing environment instance.
#[derive(Debug, Clone)]
pub struct SlicingEnv {
    template: SimConfig,
    reward: RewardParams,
    norms: NormConstants,
    sim: Option<SimState>,
    steps: usize,
    done: bool,
    last_raw: Vec<SliceMetrics>,
}

impl SlicingEnv {
    pub fn new(template: SimConfig, reward: RewardParams, norms: NormConstants) -> Result<Self> {
        template.validate()?;
        reward.validate(template.num_slices)?;
        norms.validate()?;
        Ok(Self { template, reward, norms, sim: None, steps: 0, done: true, last_raw: Vec::new() })
    }

    pub fn num_slices(&self) -> usize {
        self.template.num_slices
    }

    pub fn obs_dim(&self) -> usize {
        obs_dim(self.num_slices())
    }

    pub fn action_dim(&self) -> usize {
        self.num_slices() - 1
    }

    pub fn template(&self) -> &SimConfig {
        &self.template
    }

    pub fn reward_params(&self) -> &RewardParams {
        &self.reward
    }

    pub fn norms(&self) -> &NormConstants {
        &self.norms
    }

    pub fn sim(&self) -> Option<&SimState> {
        self.sim.as_ref()
    }

    pub fn sim_mut(&mut self) -> Option<&mut SimState> {
        self.sim.as_mut()
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Raw metrics behind the current observation.
    pub fn last_raw(&self) -> &[SliceMetrics] {
        &self.last_raw
    }

    /// Fresh simulation for `episode`, warmed up for one interval at equal
    /// shares `1/N`.
    pub fn reset(&mut self, episode: &EpisodeConfig) -> Result<Observation> {
        let cfg = episode.materialize(&self.template)?;
        let mut sim = SimState::new(cfg, episode.seed)?;
        let n = self.num_slices();
        let warmup = AllocationPlan::from_shares(&vec![1.0 / n as f64; n - 1], sim.config().num_rbgs);
        self.last_raw = sim.step_interval(&warmup);
        self.sim = Some(sim);
        self.steps = 0;
        self.done = false;
        Ok(observe(&self.last_raw, &self.norms))
    }

    /// Apply `action` (clamped into `[0,1]`) for one interval.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Protocol("step called on a finished or unstarted episode; call reset".into()));
        }
        if action.len() != self.action_dim() {
            return Err(Error::Protocol(format!(
                "action has {} entries, expected {}",
                action.len(),
                self.action_dim()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Protocol(format!("non-finite action {action:?}")));
        }
        let sim = self.sim.as_mut().expect("running episode has a simulator");
        let plan = AllocationPlan::from_shares(action, sim.config().num_rbgs);
        let raw = sim.step_interval(&plan);
        self.steps += 1;
        self.done = self.steps >= sim.config().steps_per_episode;
        let reward = reward_of(&raw, &self.reward, &self.norms);
        self.last_raw = raw.clone();
        Ok(StepOutcome { observation: observe(&raw, &self.norms), reward, done: self.done, raw })
    }
}
