#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicelab::algos::losses::{actor_loss, critic_loss, CqlSamples};
use slicelab::sim::SimConfig;
use slicelab_nn::check::{central_difference, max_relative_error};
use slicelab_nn::Mlp;

pub const OBS: usize = 5;
pub const ACT: usize = 2;
const ROWS: usize = 6;
const H: f64 = 1e-4;
const FLOOR: f64 = 1e-3;

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

struct Problem {
    critic: Mlp<f64>,
    obs: Vec<f64>,
    actions: Vec<f64>,
    targets: Vec<f64>,
    samples: CqlSamples<f64>,
}

fn problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let critic = Mlp::init(OBS + ACT, 16, 1, 1.0, &mut rng);
    let k = 4;
    Problem {
        critic,
        obs: uniform(&mut rng, ROWS * OBS, 0.0, 1.0),
        actions: uniform(&mut rng, ROWS * ACT, 0.0, 1.0),
        targets: uniform(&mut rng, ROWS, -1.0, 1.0),
        samples: CqlSamples {
            per_state: k,
            actions: uniform(&mut rng, ROWS * k * ACT, 0.0, 1.0),
            log_density: uniform(&mut rng, ROWS * k, -1.0, 2.0),
            weight: 2.5,
        },
    }
}

fn with_params(net: &Mlp<f64>, p: &[f64]) -> Mlp<f64> {
    Mlp::from_parts(net.widths(), p.to_vec()).unwrap()
}

/// Max relative error of the critic MSE gradient.
pub fn critic_mse_error(seed: u64) -> f64 {
    let p = problem(seed);
    let analytic = critic_loss(&p.critic, &p.obs, &p.actions, &p.targets, None).unwrap().grads;
    let numeric = central_difference(p.critic.params(), H, |w| {
        critic_loss(&with_params(&p.critic, w), &p.obs, &p.actions, &p.targets, None).unwrap().mse
    });
    max_relative_error(&analytic, &numeric, FLOOR)
}

/// Max relative error of the gradient of the weighted conservative penalty
/// alone (the full-loss gradient minus the MSE gradient).
pub fn cql_penalty_error(seed: u64) -> f64 {
    let p = problem(seed);
    let full = critic_loss(&p.critic, &p.obs, &p.actions, &p.targets, Some(&p.samples)).unwrap().grads;
    let mse = critic_loss(&p.critic, &p.obs, &p.actions, &p.targets, None).unwrap().grads;
    let analytic: Vec<f64> = full.iter().zip(&mse).map(|(a, b)| a - b).collect();
    let numeric = central_difference(p.critic.params(), H, |w| {
        let l = critic_loss(&with_params(&p.critic, w), &p.obs, &p.actions, &p.targets, Some(&p.samples)).unwrap();
        p.samples.weight * l.penalty
    });
    max_relative_error(&analytic, &numeric, FLOOR)
}

/// Max relative error of the actor loss gradient through both critics.
pub fn actor_loss_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xac);
    let actor = Mlp::init(OBS, 16, 2 * ACT, 1.0, &mut rng);
    let q1 = Mlp::init(OBS + ACT, 16, 1, 1.0, &mut rng);
    let q2 = Mlp::init(OBS + ACT, 16, 1, 1.0, &mut rng);
    let obs = uniform(&mut rng, ROWS * OBS, 0.0, 1.0);
    let noise = uniform(&mut rng, ROWS * ACT, -1.5, 1.5);
    let alpha = 0.2;
    let analytic = actor_loss(&actor, [&q1, &q2], &obs, &noise, alpha).unwrap().grads;
    let numeric = central_difference(actor.params(), H, |w| {
        actor_loss(&with_params(&actor, w), [&q1, &q2], &obs, &noise, alpha).unwrap().loss
    });
    max_relative_error(&analytic, &numeric, FLOOR)
}

/// Small simulator for fast tests.
pub fn small_sim() -> SimConfig {
    SimConfig { steps_per_episode: 6, ttis_per_step: 20, ..SimConfig::default() }
}

use slicelab::datasets::{self, collect, merge, relabel, CollectionSpec, Dataset};
use slicelab::env::{EpisodeConfig, NormConstants, RewardParams};
use slicelab::policies::PolicyRegistry;

pub fn collect_with(policy: &str, sim: &SimConfig, episodes: usize, seed: u64) -> Dataset {
    let spec =
        CollectionSpec { sim: sim.clone(), episode: EpisodeConfig::default(), norms: NormConstants::default(), episodes, seed };
    let mut p = PolicyRegistry::with_builtins().create(policy, sim.num_slices, true).unwrap();
    collect(p.as_mut(), &spec).unwrap()
}

/// Ways to damage a written dataset, each with the check expected to fail.
pub fn corruptions(text: &str) -> Vec<(&'static str, String)> {
    let lines: Vec<&str> = text.lines().collect();
    let join = |ls: Vec<String>| ls.join("\n") + "\n";
    let own = |ls: &[&str]| ls.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut out = Vec::new();

    let mut l = own(&lines);
    l[1] = l[1].replacen("\"step_index\":0", "\"step_index\":3", 1);
    out.push(("step_order", join(l)));

    let mut l = own(&lines);
    l.pop();
    out.push(("record_count", join(l)));

    let mut l = own(&lines);
    let pos = l[2].find("\"util\":").unwrap() + 7;
    l[2].insert_str(pos, "7");
    out.push(("ranges", join(l)));

    let mut l = own(&lines);
    l[3] = l[3].replacen("\"done\":false", "\"done\":true", 1);
    out.push(("payload_hash", join(l)));

    let mut l = own(&lines);
    l[0] = l[0].replacen("\"obs_schema_hash\":\"", "\"obs_schema_hash\":\"0", 1);
    out.push(("schema_hash", join(l)));

    let mut l = own(&lines);
    let half = l[4].len() / 2;
    l[4].truncate(half);
    out.push(("records_parse", join(l)));
    out
}

/// The dataset pipeline invariants; `Err` names the first one broken.
pub fn dataset_pipeline(sim: &SimConfig, episodes: usize, dir: &std::path::Path) -> Result<(), String> {
    let load = collect_with("load", sim, episodes, 1);
    let expected = episodes * sim.steps_per_episode;
    if load.len() != expected {
        return Err(format!("collect produced {} records, expected {expected}", load.len()));
    }
    let path = dir.join("load.jsonl");
    load.write(&path).map_err(|e| e.to_string())?;
    let back = Dataset::read(&path).map_err(|e| e.to_string())?;
    if back != load {
        return Err("round trip changed the dataset".into());
    }
    let report = datasets::validate(&path).map_err(|e| e.to_string())?;
    if !report.passed() {
        return Err(format!("clean file fails validation:\n{report}"));
    }

    let delay = collect_with("delay", sim, 2, 2);
    let merged = merge(&[load.clone(), delay.clone()]).map_err(|e| e.to_string())?;
    if merged.len() != load.len() + delay.len() || merged.header.episode_count != episodes as u64 + 2 {
        return Err(format!("merge has {} records in {} episodes", merged.len(), merged.header.episode_count));
    }

    let norms = NormConstants::default();
    let before = load.content_hash().to_string();
    let a = relabel(&load, &RewardParams::standard(sim.num_slices), &norms).map_err(|e| e.to_string())?;
    let b = relabel(&load, &RewardParams::with_weights(sim.num_slices, 1.0, 4.0), &norms).map_err(|e| e.to_string())?;
    let same_inputs = a.iter().zip(&b).all(|(x, y)| x.obs == y.obs && x.action == y.action && x.next_obs == y.next_obs);
    if !same_inputs || a.iter().zip(&b).all(|(x, y)| x.reward == y.reward) || load.content_hash() != before {
        return Err("relabeling touched more than rewards".into());
    }

    let text = std::fs::read_to_string(&path).unwrap();
    for (check, bad) in corruptions(&text) {
        let p = dir.join(format!("bad_{check}.jsonl"));
        std::fs::write(&p, bad).unwrap();
        if Dataset::read(&p).is_ok() {
            return Err(format!("strict read accepted a file broken for {check}"));
        }
        let report = datasets::validate(&p).map_err(|e| e.to_string())?;
        if report.check(check).is_none_or(|c| c.passed) {
            return Err(format!("validate missed injected {check} corruption:\n{report}"));
        }
    }
    Ok(())
}
