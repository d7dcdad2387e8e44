use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slicelab::datasets::{self, CollectionSpec, Dataset};
use slicelab::env::RewardParams;
use slicelab::harness::{
    evaluate, report, reward_variant_flags, reward_variant_spec, run_experiment, CollectStage, ExperimentSpec,
    ResultTable, RunSummary, SlaTransferPlan, TrainStage, PAPER_REWARD_VARIANTS,
};
use slicelab::policies::PolicyRegistry;
use slicelab::{Error, Result};

#[derive(Parser)]
#[command(name = "slicelab", version, about = "RAN-slicing offline RL experiments")]
struct Cli {
    /// Experiment spec (TOML) supplying simulator, episode and reward settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the spec seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage of the spec given by --config.
    Run,
    /// Roll out a policy and write a dataset.
    Collect(CollectArgs),
    /// Train an online agent against the simulator.
    TrainOnline(TrainOnlineArgs),
    /// Train an offline agent on datasets.
    TrainOffline(TrainOfflineArgs),
    /// Score policies on the evaluation suite.
    Evaluate(EvaluateArgs),
    /// Train on some delay thresholds, evaluate at another.
    SlaTransfer(SlaTransferArgs),
    /// Train one offline policy per reward weighting on shared data.
    RewardVariants(RewardVariantsArgs),
    /// Summarize finished runs as CSV and markdown.
    Report(ReportArgs),
    /// Check a dataset file.
    Validate { path: PathBuf },
    /// Concatenate datasets.
    Merge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct CollectArgs {
    /// `load`, `delay`, `uniform` or `checkpoint:<path>`.
    #[arg(long)]
    policy: String,
    #[arg(long, default_value_t = 40)]
    episodes: usize,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Sample from a stochastic policy instead of using its mean.
    #[arg(long)]
    stochastic: bool,
    /// Defaults to `<out-dir>/datasets/<policy>.jsonl`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainerArgs {
    #[arg(long)]
    steps: u64,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// TOML file of trainer hyperparameter overrides.
    #[arg(long)]
    trainer_config: Option<PathBuf>,
    /// Stage name; defaults to the algorithm.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct TrainOnlineArgs {
    #[arg(long, default_value = "sac")]
    algorithm: String,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[command(flatten)]
    train: TrainerArgs,
}

#[derive(Args)]
struct TrainOfflineArgs {
    #[arg(long, default_value = "cql")]
    algorithm: String,
    /// Dataset files, merged in order.
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long)]
    reward_alpha: Option<f64>,
    #[arg(long)]
    reward_delta: Option<f64>,
    #[command(flatten)]
    train: TrainerArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "policy", required = true)]
    policies: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
}

#[derive(Args)]
struct SlaTransferArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [100.0, 50.0])]
    train_thresholds: Vec<f64>,
    #[arg(long, default_value_t = 30.0)]
    eval_threshold: f64,
    /// Zero-based prioritized slice whose threshold varies.
    #[arg(long, default_value_t = 0)]
    slice: usize,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 20_000)]
    steps: u64,
    /// Also train online SAC at the evaluation threshold for this many steps.
    #[arg(long)]
    sac_steps: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    trainer_config: Option<PathBuf>,
}

#[derive(Args)]
struct RewardVariantsArgs {
    /// Shared dataset files; collects load and delay data when omitted.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 20_000)]
    steps: u64,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    trainer_config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Defaults to `<out-dir>/report`.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Collect(_) => "collect",
            Command::TrainOnline(_) => "train-online",
            Command::TrainOffline(_) => "train-offline",
            Command::Evaluate(_) => "evaluate",
            Command::SlaTransfer(_) => "sla-transfer",
            Command::RewardVariants(_) => "reward-variants",
            Command::Report(_) => "report",
            Command::Validate { .. } => "validate",
            Command::Merge { .. } => "merge",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slicelab: stage '{stage}' failed: {e}");
            ExitCode::FAILURE
        }
    }
}

fn base_spec(cli: &Cli, name: &str) -> Result<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec { name: name.into(), ..ExperimentSpec::default() },
    };
    if cli.config.is_none() || matches!(cli.command, Command::SlaTransfer(_) | Command::RewardVariants(_)) {
        spec.name = if cli.config.is_some() { format!("{}_{name}", spec.name) } else { name.into() };
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn trainer_table(path: Option<&Path>) -> Result<Option<toml::Table>> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))
    })
    .transpose()
}

fn print_run(summary: &RunSummary) {
    println!("{}", summary.table.to_markdown());
    println!(
        "run directory: {} ({} stages executed, {} skipped)",
        summary.dir.display(),
        summary.executed.len(),
        summary.skipped.len()
    );
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Run => {
            if cli.config.is_none() {
                return Err(Error::config("run needs --config"));
            }
            let spec = base_spec(&cli, "run")?;
            print_run(&run_experiment(&spec, &cli.out_dir)?);
        }
        Command::Collect(a) => {
            let spec = base_spec(&cli, "collect")?;
            let mut episode = spec.episode.clone();
            if let Some(t) = &a.thresholds {
                episode.delay_thresholds_ms = Some(t.clone());
            }
            let cspec =
                CollectionSpec { sim: spec.sim.clone(), episode, norms: spec.norms, episodes: a.episodes, seed: spec.seed };
            let mut policy = PolicyRegistry::with_builtins().create(&a.policy, spec.sim.num_slices, !a.stochastic)?;
            let ds = datasets::collect(policy.as_mut(), &cspec)?;
            let path = a.output.clone().unwrap_or_else(|| {
                let stem = a.policy.rsplit(['/', ':']).next().unwrap_or("dataset");
                cli.out_dir.join("datasets").join(format!("{stem}.jsonl"))
            });
            ds.write(&path)?;
            println!("{} records in {} episodes -> {}", ds.len(), ds.header.episode_count, path.display());
        }
        Command::TrainOnline(a) => {
            let mut spec = base_spec(&cli, "train_online")?;
            spec.collect.clear();
            spec.train = vec![TrainStage {
                name: a.train.name.clone().unwrap_or_else(|| a.algorithm.clone()),
                algorithm: a.algorithm.clone(),
                steps: a.train.steps,
                seeds: a.train.seeds.clone(),
                datasets: vec![],
                reward: None,
                delay_thresholds_ms: a.thresholds.clone(),
                config: trainer_table(a.train.trainer_config.as_deref())?,
            }];
            print_run(&run_experiment(&spec, &cli.out_dir)?);
        }
        Command::TrainOffline(a) => {
            let mut spec = base_spec(&cli, "train_offline")?;
            let reward = match (a.reward_alpha, a.reward_delta) {
                (None, None) => None,
                (alpha, delta) => {
                    let r = spec.reward();
                    Some(RewardParams { alpha: alpha.unwrap_or(r.alpha), delta: delta.unwrap_or(r.delta), ..r })
                }
            };
            spec.collect.clear();
            spec.train = vec![TrainStage {
                name: a.train.name.clone().unwrap_or_else(|| a.algorithm.clone()),
                algorithm: a.algorithm.clone(),
                steps: a.train.steps,
                seeds: a.train.seeds.clone(),
                datasets: a.datasets.iter().map(|p| p.display().to_string()).collect(),
                reward,
                delay_thresholds_ms: None,
                config: trainer_table(a.train.trainer_config.as_deref())?,
            }];
            print_run(&run_experiment(&spec, &cli.out_dir)?);
        }
        Command::Evaluate(a) => {
            let mut spec = base_spec(&cli, "evaluate")?;
            if let Some(t) = &a.thresholds {
                spec.eval.delay_thresholds_ms = Some(t.clone());
            }
            spec.validate()?;
            let (ctx, suite) = (spec.eval_context(), spec.eval_suite());
            let registry = PolicyRegistry::with_builtins();
            let mut table = ResultTable::new(spec.name.clone());
            for p in &a.policies {
                let mut policy = registry.create(p, spec.sim.num_slices, true)?;
                let mut row = evaluate(policy.as_mut(), &suite, &ctx)?;
                row.policy = p.clone();
                table.push(row);
            }
            let dir = cli.out_dir.join(&spec.name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            table.write_csv(&dir.join("results.csv"))?;
            table.write_json(&dir.join("results.json"))?;
            println!("{}", table.to_markdown());
        }
        Command::SlaTransfer(a) => {
            let base = base_spec(&cli, "sla_transfer")?;
            let mut plan = SlaTransferPlan::new(base, a.train_thresholds.clone(), a.eval_threshold);
            plan.slice = a.slice;
            plan.episodes_per_policy = a.episodes;
            plan.cql_steps = a.steps;
            plan.online_sac_steps = a.sac_steps;
            plan.seeds = a.seeds.clone();
            plan.cql_config = trainer_table(a.trainer_config.as_deref())?;
            let summary = run_experiment(&plan.spec()?, &cli.out_dir)?;
            print_run(&summary);
        }
        Command::RewardVariants(a) => {
            let mut base = base_spec(&cli, "reward_variants")?;
            let datasets: Vec<String> = if a.datasets.is_empty() {
                base.collect = ["load", "delay"]
                    .iter()
                    .map(|p| CollectStage {
                        name: p.to_string(),
                        policy: p.to_string(),
                        episodes: a.episodes,
                        seed: None,
                        delay_thresholds_ms: None,
                        stochastic: false,
                    })
                    .collect();
                vec!["load".into(), "delay".into()]
            } else {
                base.collect.clear();
                a.datasets.iter().map(|p| p.display().to_string()).collect()
            };
            let variants: Vec<_> = PAPER_REWARD_VARIANTS.iter().map(|(n, al, de)| (n.to_string(), *al, *de)).collect();
            let config = trainer_table(a.trainer_config.as_deref())?;
            let spec = reward_variant_spec(&base, datasets, &variants, a.steps, a.seeds.clone(), config);
            let summary = run_experiment(&spec, &cli.out_dir)?;
            print_run(&summary);
            let names: Vec<String> = summary
                .table
                .rows
                .iter()
                .map(|r| r.policy.clone())
                .filter(|p| variants.iter().any(|(v, _, _)| p == v))
                .collect();
            if names.len() == variants.len() {
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                for flag in reward_variant_flags(&summary.table, &refs, "cql_throughput", "cql_delay") {
                    println!("ordering flag: {flag}");
                }
            }
        }
        Command::Report(a) => {
            let out = a.output.clone().unwrap_or_else(|| cli.out_dir.join("report"));
            let summary = report(&a.runs, &out)?;
            println!("wrote {} and {} data files", summary.markdown.display(), summary.files.len());
        }
        Command::Validate { path } => {
            let rep = datasets::validate(path)?;
            println!("{rep}");
            if !rep.passed() {
                return Err(Error::Validation(format!("{} failed validation", path.display())));
            }
        }
        Command::Merge { inputs, output } => {
            let sets = inputs.iter().map(|p| Dataset::read(p)).collect::<Result<Vec<_>>>()?;
            let merged = datasets::merge(&sets)?;
            merged.write(output)?;
            println!("{} records in {} episodes -> {}", merged.len(), merged.header.episode_count, output.display());
        }
    }
    Ok(())
}
