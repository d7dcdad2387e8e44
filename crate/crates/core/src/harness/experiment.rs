//! Declarative experiments run as idempotent stages.
//!
//! A run directory holds `datasets/`, `train/<stage>/seed_<s>/`, `eval/` and
//! `manifest.json`. Every stage stores the hash of its inputs next to its
//! outputs in `stages/<stage>.json`; a rerun skips a stage whose key and
//! output hashes still match.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eval::{evaluate, EvalContext, EvalSuite, DEFAULT_EVAL_SEEDS, DEFAULT_UE_TOTALS};
use super::table::ResultTable;
use crate::algos::{
    Checkpoint, EpisodeEvaluator, Evaluator, SlicingTask, TrainerRegistry, TrainingData,
};
use crate::datasets::{collect, merge, relabel, CollectionSpec, Dataset};
use crate::env::{EpisodeConfig, NormConstants, RewardParams, SlicingEnv};
use crate::error::{Error, Result};
use crate::policies::{ActorPolicy, PolicyRegistry};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectStage {
    pub name: String,
    /// Policy spec, e.g. `load` or `checkpoint:<path>`.
    pub policy: String,
    pub episodes: usize,
    /// Defaults to a value derived from the experiment seed and stage name.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub delay_thresholds_ms: Option<Vec<f64>>,
    /// Sample from stochastic policies instead of using their mean.
    #[serde(default)]
    pub stochastic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainStage {
    pub name: String,
    pub algorithm: String,
    pub steps: u64,
    /// Defaults to the experiment seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Collect-stage names or dataset paths, merged in order. Offline only.
    #[serde(default)]
    pub datasets: Vec<String>,
    /// Reward used for relabeling or online interaction; defaults to the
    /// experiment reward.
    #[serde(default)]
    pub reward: Option<RewardParams>,
    /// Thresholds of the online training environment.
    #[serde(default)]
    pub delay_thresholds_ms: Option<Vec<f64>>,
    /// Trainer overrides, e.g. `cql_weight`.
    #[serde(default)]
    pub config: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalStage {
    /// Baseline policy specs scored next to the trained policies.
    pub policies: Vec<String>,
    pub ue_totals: Vec<usize>,
    pub seeds: Vec<u64>,
    pub delay_thresholds_ms: Option<Vec<f64>>,
    pub reward: Option<RewardParams>,
}

impl Default for EvalStage {
    fn default() -> Self {
        Self {
            policies: vec!["load".into(), "delay".into()],
            ue_totals: DEFAULT_UE_TOTALS.to_vec(),
            seeds: DEFAULT_EVAL_SEEDS.to_vec(),
            delay_thresholds_ms: None,
            reward: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub sim: SimConfig,
    pub episode: EpisodeConfig,
    pub norms: NormConstants,
    pub reward: Option<RewardParams>,
    pub collect: Vec<CollectStage>,
    pub train: Vec<TrainStage>,
    pub eval: EvalStage,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 0,
            sim: SimConfig::default(),
            episode: EpisodeConfig::default(),
            norms: NormConstants::default(),
            reward: None,
            collect: Vec::new(),
            train: Vec::new(),
            eval: EvalStage::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment spec serializes")
    }

    pub fn reward(&self) -> RewardParams {
        self.reward.clone().unwrap_or_else(|| RewardParams::standard(self.sim.num_slices))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sim.num_slices;
        self.sim.validate()?;
        self.episode.validate(n)?;
        self.norms.validate()?;
        self.reward().validate(n)?;
        let mut names: Vec<&str> = Vec::new();
        for c in &self.collect {
            if names.contains(&c.name.as_str()) {
                return Err(Error::config(format!("duplicate stage name '{}'", c.name)));
            }
            names.push(&c.name);
        }
        for t in &self.train {
            if names.contains(&t.name.as_str()) {
                return Err(Error::config(format!("duplicate stage name '{}'", t.name)));
            }
            names.push(&t.name);
            if let Some(r) = &t.reward {
                r.validate(n).map_err(|e| Error::config(format!("stage '{}': {e}", t.name)))?;
            }
        }
        Ok(())
    }

    fn train_seeds(&self, stage: &TrainStage) -> Vec<u64> {
        if stage.seeds.is_empty() {
            vec![self.seed]
        } else {
            stage.seeds.clone()
        }
    }

    fn collect_seed(&self, stage: &CollectStage) -> u64 {
        stage.seed.unwrap_or_else(|| {
            let digest = Sha256::digest(format!("{}/{}", self.seed, stage.name).as_bytes());
            u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
        })
    }

    pub fn eval_context(&self) -> EvalContext {
        let mut ctx = EvalContext::new(
            self.sim.clone(),
            self.eval.reward.clone().unwrap_or_else(|| self.reward()),
            self.norms,
        );
        ctx.background_ues = self.episode.background_ues;
        ctx.delay_thresholds_ms = self.eval.delay_thresholds_ms.clone();
        ctx
    }

    pub fn eval_suite(&self) -> EvalSuite {
        EvalSuite::from_totals(&self.eval.ue_totals, &self.eval.seeds, self.sim.num_slices)
    }
}

fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("stage inputs serialize");
    hex(&Sha256::digest(&bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    /// Output path relative to the run directory, and its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// What `run_experiment` did.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub table: ResultTable,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub tool: String,
    pub spec: ExperimentSpec,
    pub stages: Vec<StageRecord>,
    pub dataset_hashes: BTreeMap<String, String>,
    /// Distinct threshold vectors seen by each training stage.
    pub training_slas: BTreeMap<String, Vec<Vec<f64>>>,
    pub eval_thresholds_ms: Vec<f64>,
    /// Whether any training dataset contains the evaluation thresholds.
    pub eval_sla_seen_in_training: bool,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
    }
}

struct Runner {
    dir: PathBuf,
    summary_executed: Vec<String>,
    summary_skipped: Vec<String>,
    records: Vec<StageRecord>,
}

impl Runner {
    fn stage_file(&self, stage: &str) -> PathBuf {
        self.dir.join("stages").join(format!("{}.json", stage.replace('/', "_")))
    }

    /// Run `body` unless a matching record exists. `body` returns the output
    /// paths it wrote, relative to the run directory.
    fn stage(&mut self, stage: &str, key: String, body: impl FnOnce(&Path) -> Result<Vec<String>>) -> Result<()> {
        let record_path = self.stage_file(stage);
        if let Ok(text) = std::fs::read_to_string(&record_path) {
            if let Ok(rec) = serde_json::from_str::<StageRecord>(&text) {
                let intact = rec.key == key
                    && rec.outputs.iter().all(|(p, h)| file_hash(&self.dir.join(p)).ok().as_deref() == Some(h));
                if intact {
                    self.summary_skipped.push(stage.to_string());
                    self.records.push(rec);
                    return Ok(());
                }
            }
        }
        let outputs = body(&self.dir).map_err(|e| stage_error(stage, e))?;
        let mut rec = StageRecord { stage: stage.into(), key, outputs: BTreeMap::new() };
        for p in outputs {
            let h = file_hash(&self.dir.join(&p))?;
            rec.outputs.insert(p, h);
        }
        write_text(&record_path, &serde_json::to_string_pretty(&rec).expect("record serializes"))?;
        self.summary_executed.push(stage.to_string());
        self.records.push(rec);
        Ok(())
    }
}

/// Prefix an error with the failing stage.
pub fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("stage '{stage}': {m}")),
        Error::Validation(m) => Error::Validation(format!("stage '{stage}': {m}")),
        Error::Numeric(m) => Error::Numeric(format!("stage '{stage}': {m}")),
        Error::Checkpoint(m) => Error::Checkpoint(format!("stage '{stage}': {m}")),
        Error::Protocol(m) => Error::Protocol(format!("stage '{stage}': {m}")),
        other => other,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Name of a trained policy in result tables.
pub fn trained_policy_name(stage: &str, seed: u64, seeds: usize) -> String {
    if seeds == 1 {
        stage.to_string()
    } else {
        format!("{stage}_s{seed}")
    }
}

pub fn checkpoint_path(dir: &Path, stage: &str, seed: u64) -> PathBuf {
    dir.join("train").join(stage).join(format!("seed_{seed}")).join("checkpoint.json")
}

/// Execute `spec` into `out_dir/<spec.name>`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunSummary> {
    spec.validate()?;
    let dir = out_dir.join(&spec.name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut runner =
        Runner { dir: dir.clone(), summary_executed: vec![], summary_skipped: vec![], records: vec![] };
    let n = spec.sim.num_slices;
    let policies = PolicyRegistry::with_builtins();
    let trainers = TrainerRegistry::with_builtins();

    // collection
    let mut dataset_files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for c in &spec.collect {
        let rel = format!("datasets/{}.jsonl", c.name);
        let seed = spec.collect_seed(c);
        let mut episode = spec.episode.clone();
        if let Some(t) = &c.delay_thresholds_ms {
            episode.delay_thresholds_ms = Some(t.clone());
        }
        let cspec = CollectionSpec { sim: spec.sim.clone(), episode, norms: spec.norms, episodes: c.episodes, seed };
        let policy_key = match c.policy.split_once(':') {
            Some(("checkpoint", p)) => format!("checkpoint:{}", file_hash(Path::new(p)).unwrap_or_default()),
            _ => c.policy.clone(),
        };
        let key = hash_json(&(
            "collect",
            &policy_key,
            c.stochastic,
            &cspec.sim,
            &cspec.episode,
            &cspec.norms,
            c.episodes,
            seed,
        ));
        let stage = format!("collect/{}", c.name);
        runner.stage(&stage, key, |dir| {
            let mut policy = policies.create(&c.policy, n, !c.stochastic)?;
            let ds = collect(policy.as_mut(), &cspec)?;
            ds.write(&dir.join(&rel))?;
            Ok(vec![rel.clone()])
        })?;
        dataset_files.insert(c.name.clone(), dir.join(&rel));
    }

    // training
    let mut dataset_hashes = BTreeMap::new();
    let mut training_slas: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut trained: Vec<(String, PathBuf)> = Vec::new();
    for t in &spec.train {
        let stage_name = format!("train/{}", t.name);
        let trainer = trainers.create(&t.algorithm, t.config.as_ref()).map_err(|e| stage_error(&stage_name, e))?;
        let reward = t.reward.clone().unwrap_or_else(|| spec.reward());
        let mut datasets = Vec::new();
        if trainer.online() {
            if !t.datasets.is_empty() {
                return Err(Error::config(format!("stage '{stage_name}': online trainers take no datasets")));
            }
        } else {
            if t.datasets.is_empty() {
                return Err(Error::config(format!("stage '{stage_name}': offline training needs datasets")));
            }
            for d in &t.datasets {
                let path = match dataset_files.get(d) {
                    Some(p) => p.clone(),
                    None if Path::new(d).is_file() => PathBuf::from(d),
                    None => {
                        return Err(Error::config(format!(
                            "stage '{stage_name}' needs dataset '{d}', which is neither a collect stage nor a file"
                        )))
                    }
                };
                let ds = Dataset::read(&path).map_err(|e| stage_error(&stage_name, e))?;
                dataset_hashes.insert(d.clone(), ds.content_hash().to_string());
                datasets.push(ds);
            }
        }
        let merged = if datasets.is_empty() { None } else { Some(merge(&datasets)?) };
        let slas = match &merged {
            Some(ds) => ds.header.sla_summary.clone(),
            None => vec![t.delay_thresholds_ms.clone().unwrap_or_else(|| spec.sim.delay_thresholds_ms.clone())],
        };
        training_slas.insert(t.name.clone(), slas);
        let seeds = spec.train_seeds(t);
        for &seed in &seeds {
            let ck_path = checkpoint_path(&dir, &t.name, seed);
            let rel_dir = format!("train/{}/seed_{seed}", t.name);
            let key = hash_json(&(
                "train",
                &t.algorithm,
                trainer.config_json(),
                t.steps,
                seed,
                merged.as_ref().map(|d| d.content_hash().to_string()),
                &reward,
                &spec.norms,
                &spec.sim,
                &spec.episode,
                &t.delay_thresholds_ms,
            ));
            let stage = format!("train/{}/seed_{seed}", t.name);
            runner.stage(&stage, key, |_| {
                let mut evaluator = SlicingEvaluator::new(spec, &reward)?;
                let output = if trainer.online() {
                    let mut episode = spec.episode.clone();
                    if let Some(th) = &t.delay_thresholds_ms {
                        episode.delay_thresholds_ms = Some(th.clone());
                    }
                    let env = SlicingEnv::new(spec.sim.clone(), reward.clone(), spec.norms)?;
                    let mut task = SlicingTask::new(env, episode);
                    trainer.train(TrainingData::Environment(&mut task), t.steps, seed, Some(&mut evaluator))?
                } else {
                    let transitions = relabel(merged.as_ref().expect("offline stages have data"), &reward, &spec.norms)?;
                    trainer.train(TrainingData::Transitions(&transitions), t.steps, seed, Some(&mut evaluator))?
                };
                let mut ck = Checkpoint::from_agent(&output.agent, trainer.name(), t.steps, seed)
                    .for_slicing(n, spec.norms)
                    .with_provenance("config", trainer.config_json())
                    .with_provenance("reward", serde_json::to_string(&reward).expect("reward serializes"));
                if let Some(ds) = &merged {
                    ck = ck.with_provenance("dataset_sha256", ds.content_hash());
                }
                ck.save(&ck_path)?;
                output.log.write_csv(&ck_path.with_file_name("train_log.csv"))?;
                Ok(vec![format!("{rel_dir}/checkpoint.json"), format!("{rel_dir}/train_log.csv")])
            })?;
            trained.push((trained_policy_name(&t.name, seed, seeds.len()), ck_path));
        }
    }

    // evaluation
    let ctx = spec.eval_context();
    let suite = spec.eval_suite();
    let mut ck_hashes = Vec::new();
    for (name, p) in &trained {
        ck_hashes.push((name.clone(), file_hash(p)?));
    }
    let key = hash_json(&("eval", &spec.eval, &ctx, &suite, &ck_hashes));
    let title = spec.name.clone();
    runner.stage("eval", key, |dir| {
        let mut table = ResultTable::new(title);
        for p in &spec.eval.policies {
            let mut policy = policies.create(p, n, true)?;
            let mut row = evaluate(policy.as_mut(), &suite, &ctx)?;
            row.policy = p.clone();
            table.push(row);
        }
        for (name, path) in &trained {
            let mut policy = ActorPolicy::from_file(path, true)?.named(name.clone());
            table.push(evaluate(&mut policy, &suite, &ctx)?);
        }
        write_text(&dir.join("eval/results.csv"), &table.to_csv())?;
        table.write_json(&dir.join("eval/results.json"))?;
        write_text(&dir.join("eval/results.md"), &table.to_markdown())?;
        Ok(vec!["eval/results.csv".into(), "eval/results.json".into(), "eval/results.md".into()])
    })?;
    let table = ResultTable::read_json(&dir.join("eval/results.json"))?;

    let eval_thresholds = ctx.thresholds();
    let manifest = Manifest {
        name: spec.name.clone(),
        tool: format!("slicelab {}", env!("CARGO_PKG_VERSION")),
        spec: spec.clone(),
        stages: runner.records.clone(),
        dataset_hashes,
        eval_sla_seen_in_training: training_slas.values().flatten().any(|s| s == &eval_thresholds),
        training_slas,
        eval_thresholds_ms: eval_thresholds,
    };
    write_text(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(RunSummary { dir, table, executed: runner.summary_executed, skipped: runner.summary_skipped })
}

/// Episodes per evaluation during training.
pub const EVAL_EPISODES: u64 = 5;

/// Periodic evaluation during training on a few fixed episodes of the
/// experiment's evaluation environment.
struct SlicingEvaluator {
    inner: EpisodeEvaluator<SlicingTask>,
}

impl SlicingEvaluator {
    fn new(spec: &ExperimentSpec, reward: &RewardParams) -> Result<Self> {
        let env = SlicingEnv::new(spec.sim.clone(), reward.clone(), spec.norms)?;
        let mut episode = spec.episode.clone();
        if let Some(t) = &spec.eval.delay_thresholds_ms {
            episode.delay_thresholds_ms = Some(t.clone());
        }
        let seeds = (0..EVAL_EPISODES).map(|i| 7_000 + i).collect();
        Ok(Self { inner: EpisodeEvaluator { env: SlicingTask::new(env, episode), seeds } })
    }
}

impl Evaluator for SlicingEvaluator {
    fn evaluate(&mut self, agent: &crate::algos::Agent) -> Result<f64> {
        self.inner.evaluate(agent)
    }
}
