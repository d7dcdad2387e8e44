mod common;

use slicelab::env::{NormConstants, RewardParams};
use slicelab::harness::{
    evaluate, read_eval_curve, report, reward_variant_spec, run_experiment, CollectStage, EvalContext, EvalSuite,
    ExperimentSpec, Manifest, SlaTransferPlan, TrainStage,
};
use slicelab::policies::{FixedPolicy, PolicyRegistry};
use slicelab::sim::SimConfig;
use slicelab::Error;

fn tiny() -> ExperimentSpec {
    let mut spec = ExperimentSpec { name: "tiny".into(), sim: common::small_sim(), ..ExperimentSpec::default() };
    spec.eval.ue_totals = vec![6, 12];
    spec.eval.seeds = vec![1, 2];
    spec
}

fn collect_stage(name: &str, policy: &str) -> CollectStage {
    CollectStage {
        name: name.into(),
        policy: policy.into(),
        episodes: 2,
        seed: None,
        delay_thresholds_ms: None,
        stochastic: false,
    }
}

fn cql_stage(name: &str, datasets: &[&str], steps: u64) -> TrainStage {
    let mut config = toml::Table::new();
    config.insert("batch_size".into(), 8.into());
    config.insert("num_sampled_actions".into(), 2.into());
    config.insert("eval_interval".into(), 4.into());
    TrainStage {
        name: name.into(),
        algorithm: "cql".into(),
        steps,
        seeds: vec![],
        datasets: datasets.iter().map(|d| d.to_string()).collect(),
        reward: None,
        delay_thresholds_ms: None,
        config: Some(config),
    }
}

#[test]
fn default_suite_has_twenty_distinct_environments() {
    let suite = EvalSuite::default_for(3);
    assert_eq!(suite.len(), 20);
    suite.validate().unwrap();
    let sim = SimConfig { steps_per_episode: 2, ttis_per_step: 10, ..SimConfig::default() };
    let ctx = EvalContext::new(sim, RewardParams::standard(3), NormConstants::default());
    let mut p = PolicyRegistry::with_builtins().create("load", 3, true).unwrap();
    let row = evaluate(p.as_mut(), &suite, &ctx).unwrap();
    assert_eq!((row.envs, row.per_env.len()), (20, 20));
    assert_eq!(row, evaluate(p.as_mut(), &suite, &ctx).unwrap());
}

#[test]
fn uniform_shares_on_symmetric_slices_give_similar_violations() {
    let sim = SimConfig {
        delay_thresholds_ms: vec![50.0, 50.0, 10.0],
        steps_per_episode: 40,
        ttis_per_step: 20,
        ..SimConfig::default()
    };
    let ctx = EvalContext::new(sim, RewardParams::standard(3), NormConstants::default());
    let seeds: Vec<u64> = (1..=600).collect();
    let suite = EvalSuite::from_totals(&[16], &seeds, 3);
    let row = evaluate(&mut FixedPolicy::new("half", vec![0.5, 0.5]), &suite, &ctx).unwrap();
    // per-environment violations hinge on UE placement, so compare the
    // paired difference against its own standard error
    let diffs: Vec<f64> = row.per_env.iter().map(|e| e.d_vio_pct[0] - e.d_vio_pct[1]).collect();
    let d = slicelab::harness::Stat::of(&diffs);
    let se = d.std / (diffs.len() as f64).sqrt();
    assert!(row.d_vio_pct.mean > 1.0, "scenario too light to be informative");
    assert!(d.mean.abs() <= 3.0 * se, "mean slice difference {} with standard error {se}", d.mean);
}

#[test]
fn zero_steps_evaluates_the_initial_policy_and_reruns_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny();
    spec.collect = vec![collect_stage("load", "load"), collect_stage("delay", "delay")];
    spec.train = vec![cql_stage("cql_mixed", &["load", "delay"], 0)];
    let first = run_experiment(&spec, dir.path()).unwrap();
    assert_eq!(first.executed, ["collect/load", "collect/delay", "train/cql_mixed/seed_0", "eval"]);
    let log = first.dir.join("train/cql_mixed/seed_0/train_log.csv");
    assert_eq!(read_eval_curve(&log).unwrap().len(), 1);

    let results = std::fs::read(first.dir.join("eval/results.csv")).unwrap();
    let second = run_experiment(&spec, dir.path()).unwrap();
    assert!(second.executed.is_empty());
    assert_eq!(second.skipped.len(), 4);
    assert_eq!(second.table, first.table);
    assert_eq!(std::fs::read(first.dir.join("eval/results.csv")).unwrap(), results);

    let manifest = Manifest::load(&first.dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.dataset_hashes.len(), 2);
    let ck = std::fs::read_to_string(first.dir.join("train/cql_mixed/seed_0/checkpoint.json")).unwrap();
    let merged = slicelab::datasets::merge(&[
        slicelab::datasets::Dataset::read(&first.dir.join("datasets/load.jsonl")).unwrap(),
        slicelab::datasets::Dataset::read(&first.dir.join("datasets/delay.jsonl")).unwrap(),
    ])
    .unwrap();
    assert!(ck.contains(merged.content_hash()));
}

#[test]
fn damaged_outputs_rerun_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny();
    spec.collect = vec![collect_stage("load", "load")];
    spec.train = vec![cql_stage("cql", &["load"], 4)];
    let first = run_experiment(&spec, dir.path()).unwrap();
    std::fs::write(first.dir.join("train/cql/seed_0/train_log.csv"), "junk").unwrap();
    let second = run_experiment(&spec, dir.path()).unwrap();
    assert_eq!(second.executed, ["train/cql/seed_0"]);
    assert_eq!(second.table, first.table);
}

#[test]
fn missing_dataset_names_the_stage() {
    let mut spec = tiny();
    spec.train = vec![cql_stage("cql", &["nowhere"], 1)];
    let err = run_experiment(&spec, tempfile::tempdir().unwrap().path()).unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("train/cql") && m.contains("nowhere")), "{err}");
}

#[test]
fn transfer_manifest_records_unseen_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = SlaTransferPlan::new(tiny(), vec![100.0, 50.0], 30.0);
    plan.episodes_per_policy = 1;
    plan.cql_steps = 2;
    plan.cql_config = cql_stage("x", &[], 0).config;
    let summary = run_experiment(&plan.spec().unwrap(), dir.path()).unwrap();
    let m = Manifest::load(&summary.dir.join("manifest.json")).unwrap();
    assert_eq!(m.eval_thresholds_ms, vec![30.0, 50.0, 10.0]);
    assert!(!m.eval_sla_seen_in_training);
    assert_eq!(m.training_slas["cql"].len(), 2);

    let mut same = SlaTransferPlan::new(tiny(), vec![100.0], 100.0);
    same.episodes_per_policy = 1;
    same.cql_steps = 2;
    same.cql_config = plan.cql_config.clone();
    let mut spec = same.spec().unwrap();
    spec.name = "same".into();
    let summary = run_experiment(&spec, dir.path()).unwrap();
    assert!(Manifest::load(&summary.dir.join("manifest.json")).unwrap().eval_sla_seen_in_training);
}

#[test]
fn reward_variants_share_data_and_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = tiny();
    base.collect = vec![collect_stage("load", "load")];
    let variants = vec![("v_a".to_string(), 4.0, 1.0), ("v_b".to_string(), 1.0, 4.0)];
    let mut spec = reward_variant_spec(&base, vec!["load".into()], &variants, 8, vec![1, 2], None);
    for t in &mut spec.train {
        t.config = cql_stage("x", &[], 0).config;
    }
    let summary = run_experiment(&spec, dir.path()).unwrap();
    let names: Vec<&str> = summary.table.rows.iter().map(|r| r.policy.as_str()).collect();
    assert_eq!(names, ["load", "delay", "v_a_s1", "v_a_s2", "v_b_s1", "v_b_s2"]);

    let out = dir.path().join("report");
    let rep = report(&[summary.dir.clone()], &out).unwrap();
    assert_eq!(rep.files.len(), 3);
    let curve = std::fs::read_to_string(out.join("tiny_v_a_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next().unwrap(), "step,seed_1,seed_2,mean,std");
    let steps: Vec<u64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(steps, [0, 4, 8]);
    let md = std::fs::read_to_string(rep.markdown).unwrap();
    assert!(md.contains("2 seed(s)") && md.contains("| v_b_s2 |"));
}
