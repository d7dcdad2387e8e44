//! Offline datasets: collection, storage, validation, merging and reward
//! relabeling.
//!
//! Records keep raw slice metrics and never a reward, so any reward
//! parameterisation can be applied after the fact.
//!
//! # File format
//!
//! JSON Lines. Line 1 is the [`DatasetHeader`]; every following line is one
//! [`TransitionRecord`]. `payload_sha256` is the SHA-256 of the record lines,
//! each including its trailing `\n`. Files are written to `<path>.partial`
//! and renamed once complete, so a leftover `.partial` marks a failed write.

mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use validate::{validate, CheckResult, ValidationReport};

use crate::algos::{stream, Transition};
use crate::env::{obs_schema_hash, observe, reward_of, EpisodeConfig, NormConstants, RewardParams, SlicingEnv};
use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::sim::{SimConfig, SliceMetrics};

pub const DATASET_FORMAT: &str = "slicelab-dataset";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

const EPISODE_SEED_STREAM: u64 = 5;
const POLICY_STREAM: u64 = 6;

/// Where a record came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvMeta {
    /// UE count of every slice, background last.
    pub ue_counts: Vec<usize>,
    pub delay_thresholds_ms: Vec<f64>,
    pub seed: u64,
    pub behavior_policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRecord {
    pub episode_id: u64,
    pub step_index: u32,
    /// Metrics the action was chosen from.
    pub raw: Vec<SliceMetrics>,
    pub action: Vec<f64>,
    /// Metrics of the interval the action governed.
    pub next_raw: Vec<SliceMetrics>,
    pub done: bool,
    pub env_meta: EnvMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub schema_version: u32,
    pub num_slices: usize,
    pub obs_schema_hash: String,
    pub record_count: u64,
    pub episode_count: u64,
    /// Distinct per-slice delay threshold vectors present in the records.
    pub sla_summary: Vec<Vec<f64>>,
    pub behavior_policies: Vec<String>,
    pub payload_sha256: String,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<TransitionRecord>,
}

fn record_line(r: &TransitionRecord) -> String {
    let mut line = serde_json::to_string(r).expect("record serializes");
    line.push('\n');
    line
}

fn payload_hash(records: &[TransitionRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(record_line(r).as_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Dataset {
    /// Wrap records, deriving every header field from them.
    pub fn new(num_slices: usize, records: Vec<TransitionRecord>, provenance: BTreeMap<String, String>) -> Self {
        let mut slas: Vec<Vec<f64>> = Vec::new();
        let mut policies = BTreeSet::new();
        let mut episodes = BTreeSet::new();
        for r in &records {
            if !slas.contains(&r.env_meta.delay_thresholds_ms) {
                slas.push(r.env_meta.delay_thresholds_ms.clone());
            }
            policies.insert(r.env_meta.behavior_policy.clone());
            episodes.insert(r.episode_id);
        }
        let header = DatasetHeader {
            format: DATASET_FORMAT.into(),
            schema_version: DATASET_SCHEMA_VERSION,
            num_slices,
            obs_schema_hash: obs_schema_hash(num_slices),
            record_count: records.len() as u64,
            episode_count: episodes.len() as u64,
            sla_summary: slas,
            behavior_policies: policies.into_iter().collect(),
            payload_sha256: payload_hash(&records),
            provenance,
        };
        Self { header, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_slices(&self) -> usize {
        self.header.num_slices
    }

    /// Content hash of the records.
    pub fn content_hash(&self) -> &str {
        &self.header.payload_sha256
    }

    pub fn check_schema(&self) -> Result<()> {
        let h = &self.header;
        if h.format != DATASET_FORMAT || h.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Validation(format!("unsupported dataset {} v{}", h.format, h.schema_version)));
        }
        if h.obs_schema_hash != obs_schema_hash(h.num_slices) {
            return Err(Error::Validation("observation schema hash does not match this build".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let partial = partial_path(path);
        let file = std::fs::File::create(&partial).map_err(|e| Error::io(&partial, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(&partial, e);
        let header = serde_json::to_string(&self.header).expect("header serializes");
        writeln!(w, "{header}").map_err(io)?;
        for r in &self.records {
            w.write_all(record_line(r).as_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)?;
        drop(w);
        std::fs::rename(&partial, path).map_err(|e| Error::io(path, e))
    }

    /// Strict read: any structural problem is an error. Use [`validate`] for
    /// a per-check report instead.
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let format_err = |msg: String| Error::Format { path: path.to_path_buf(), msg };
        let first = lines.next().ok_or_else(|| format_err("empty file".into()))?.map_err(|e| Error::io(path, e))?;
        let header: DatasetHeader =
            serde_json::from_str(&first).map_err(|e| format_err(format!("header: {e}")))?;
        let mut records = Vec::with_capacity(header.record_count as usize);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let r = serde_json::from_str(&line).map_err(|e| format_err(format!("record {}: {e}", i + 1)))?;
            records.push(r);
        }
        let ds = Self { header, records };
        ds.check_schema()?;
        if ds.records.len() as u64 != ds.header.record_count {
            return Err(format_err(format!(
                "header announces {} records, file holds {}",
                ds.header.record_count,
                ds.records.len()
            )));
        }
        if payload_hash(&ds.records) != ds.header.payload_sha256 {
            return Err(format_err("payload hash mismatch".into()));
        }
        Ok(ds)
    }
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Concatenate datasets in order, renumbering episodes so they stay distinct.
pub fn merge(datasets: &[Dataset]) -> Result<Dataset> {
    let first = datasets.first().ok_or_else(|| Error::config("nothing to merge"))?;
    let n = first.num_slices();
    let mut records = Vec::with_capacity(datasets.iter().map(Dataset::len).sum());
    let mut provenance = BTreeMap::new();
    let mut next_episode = 0u64;
    for (i, ds) in datasets.iter().enumerate() {
        ds.check_schema()?;
        if ds.num_slices() != n || ds.header.obs_schema_hash != first.header.obs_schema_hash {
            return Err(Error::Validation(format!(
                "dataset {i} has {} slices, dataset 0 has {n}",
                ds.num_slices()
            )));
        }
        let mut remap = BTreeMap::new();
        for r in &ds.records {
            let id = *remap.entry(r.episode_id).or_insert_with(|| {
                next_episode += 1;
                next_episode - 1
            });
            records.push(TransitionRecord { episode_id: id, ..r.clone() });
        }
        provenance.insert(format!("merged.{i}"), ds.content_hash().to_string());
    }
    if datasets.len() == 1 {
        return Ok(first.clone());
    }
    Ok(Dataset::new(n, records, provenance))
}

/// Training transitions under `params`: observations are the normalized raw
/// metrics and the reward of an action is computed from the interval it
/// governed.
pub fn relabel(dataset: &Dataset, params: &RewardParams, norms: &NormConstants) -> Result<Vec<Transition>> {
    dataset.check_schema()?;
    let n = dataset.num_slices();
    params.validate(n)?;
    norms.validate()?;
    dataset
        .records
        .iter()
        .map(|r| {
            if r.raw.len() != n || r.next_raw.len() != n || r.action.len() != n - 1 {
                return Err(Error::Validation(format!(
                    "record episode {} step {} does not fit {n} slices",
                    r.episode_id, r.step_index
                )));
            }
            Ok(Transition {
                obs: observe(&r.raw, norms).0,
                action: r.action.clone(),
                reward: reward_of(&r.next_raw, params, norms),
                next_obs: observe(&r.next_raw, norms).0,
                done: r.done,
            })
        })
        .collect()
}

/// Per-episode seeds derived from a collection seed.
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = stream(seed, EPISODE_SEED_STREAM);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

/// What `collect` runs.
#[derive(Debug, Clone)]
pub struct CollectionSpec {
    pub sim: SimConfig,
    pub episode: EpisodeConfig,
    pub norms: NormConstants,
    pub episodes: usize,
    pub seed: u64,
}

/// Run `policy` for `spec.episodes` episodes, each with its own seed and UE
/// population, recording one transition per step.
pub fn collect(policy: &mut dyn Policy, spec: &CollectionSpec) -> Result<Dataset> {
    let n = spec.sim.num_slices;
    // the reward is not stored, any valid parameters do here
    let mut env = SlicingEnv::new(spec.sim.clone(), RewardParams::standard(n), spec.norms)?;
    let mut rng = stream(spec.seed, POLICY_STREAM);
    let mut records = Vec::with_capacity(spec.episodes * spec.sim.steps_per_episode);
    for (e, seed) in episode_seeds(spec.seed, spec.episodes).into_iter().enumerate() {
        let episode = spec.episode.with_seed(seed);
        let mut obs = env.reset(&episode)?;
        policy.reset();
        let sim_cfg = env.sim().expect("reset starts a simulation").config();
        let meta = EnvMeta {
            ue_counts: sim_cfg.ue_counts.clone(),
            delay_thresholds_ms: sim_cfg.delay_thresholds_ms.clone(),
            seed,
            behavior_policy: policy.name().to_string(),
        };
        let mut step = 0u32;
        loop {
            let raw = env.last_raw().to_vec();
            let action: Vec<f64> = policy.act(&obs, &raw, &mut rng).iter().map(|a| a.clamp(0.0, 1.0)).collect();
            let out = env.step(&action)?;
            records.push(TransitionRecord {
                episode_id: e as u64,
                step_index: step,
                raw,
                action,
                next_raw: out.raw,
                done: out.done,
                env_meta: meta.clone(),
            });
            step += 1;
            obs = out.observation;
            if out.done {
                break;
            }
        }
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("tool".into(), format!("slicelab {}", env!("CARGO_PKG_VERSION")));
    provenance.insert("collection_seed".into(), spec.seed.to_string());
    provenance.insert("episodes".into(), spec.episodes.to_string());
    provenance.insert("policy".into(), policy.name().to_string());
    provenance.insert("norms".into(), serde_json::to_string(&spec.norms).expect("norms serialize"));
    Ok(Dataset::new(n, records, provenance))
}
