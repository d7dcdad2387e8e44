//! Training loops under the step-parity convention: an online step is one
//! environment sample plus one minibatch update, an offline step is one
//! minibatch update.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{cql_update, sac_update, Agent, CqlConfig, SacConfig, UpdateStats};
use super::envs::Environment;
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};

/// RNG stream layout shared by both trainers, so equal seeds give equal
/// initial networks.
const INIT_STREAM: u64 = 1;
const UPDATE_STREAM: u64 = 2;
const ACT_STREAM: u64 = 3;
const EPISODE_STREAM: u64 = 4;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Initial agent for a trainer seed.
pub fn initial_agent(seed: u64, obs_dim: usize, act_dim: usize, initial_alpha: f64) -> Agent {
    Agent::new(obs_dim, act_dim, initial_alpha, &mut stream(seed, INIT_STREAM))
}

/// Scores the current deterministic actor.
pub trait Evaluator {
    fn evaluate(&mut self, agent: &Agent) -> Result<f64>;
}

/// Mean undiscounted return of deterministic episodes, one per seed.
pub struct EpisodeEvaluator<E> {
    pub env: E,
    pub seeds: Vec<u64>,
}

impl<E: Environment> Evaluator for EpisodeEvaluator<E> {
    fn evaluate(&mut self, agent: &Agent) -> Result<f64> {
        let mut total = 0.0;
        for &seed in &self.seeds {
            total += run_episode(&mut self.env, seed, |obs| agent.act_deterministic(obs))?;
        }
        Ok(total / self.seeds.len().max(1) as f64)
    }
}

/// Return of one episode under `policy`.
pub fn run_episode<E: Environment + ?Sized>(
    env: &mut E,
    seed: u64,
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<f64> {
    let mut obs = env.reset(seed)?;
    let mut ret = 0.0;
    loop {
        let (next, r, done) = env.step(&policy(&obs))?;
        ret += r;
        obs = next;
        if done {
            return Ok(ret);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub stats: UpdateStats,
    pub eval_return: Option<f64>,
    pub env_ms: f64,
    pub update_ms: f64,
    pub wall_ms: f64,
}

/// Append-only per-step training record.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

pub const TRAIN_LOG_HEADER: &str =
    "step,critic_loss,actor_loss,cql_penalty,q_mean,alpha,log_prob,eval_return,env_ms,update_ms,wall_ms";

impl TrainLog {
    fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    /// Rows with the wall-clock columns zeroed; equal seeds give equal views.
    pub fn deterministic_view(&self) -> Vec<LogRow> {
        self.rows.iter().map(|r| LogRow { env_ms: 0.0, update_ms: 0.0, wall_ms: 0.0, ..*r }).collect()
    }

    /// `(step, return)` of every evaluation.
    pub fn evaluations(&self) -> Vec<(u64, f64)> {
        self.rows.iter().filter_map(|r| r.eval_return.map(|e| (r.step, e))).collect()
    }

    pub fn total_env_ms(&self) -> f64 {
        self.rows.iter().map(|r| r.env_ms).sum()
    }

    pub fn total_update_ms(&self) -> f64 {
        self.rows.iter().map(|r| r.update_ms).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let s = &r.stats;
            let eval = r.eval_return.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3}",
                r.step,
                s.critic_loss,
                s.actor_loss,
                s.cql_penalty,
                s.q_mean,
                s.alpha,
                s.log_prob,
                eval,
                r.env_ms,
                r.update_ms,
                r.wall_ms
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutput {
    pub agent: Agent,
    pub log: TrainLog,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn maybe_evaluate(
    evaluator: &mut Option<&mut dyn Evaluator>,
    interval: usize,
    step: u64,
    agent: &Agent,
) -> Result<Option<f64>> {
    match evaluator {
        Some(ev) if interval > 0 && step % interval as u64 == 0 => Ok(Some(ev.evaluate(agent)?)),
        _ => Ok(None),
    }
}

/// Online SAC. Warm-up samples use uniform random actions and are not counted
/// as training steps; afterwards every step is one environment step followed
/// by one update.
pub fn train_online(
    env: &mut dyn Environment,
    cfg: &SacConfig,
    total_steps: u64,
    seed: u64,
    mut evaluator: Option<&mut dyn Evaluator>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let (obs_dim, act_dim) = (env.obs_dim(), env.action_dim());
    let mut agent = initial_agent(seed, obs_dim, act_dim, cfg.fixed_alpha.unwrap_or(cfg.initial_alpha));
    let mut log = TrainLog::default();
    let start = Instant::now();
    if let Some(e) = maybe_evaluate(&mut evaluator, cfg.eval_interval, 0, &agent)? {
        log.push(LogRow { step: 0, eval_return: Some(e), wall_ms: ms(start), ..Default::default() });
    }
    if total_steps == 0 {
        return Ok(TrainOutput { agent, log });
    }

    let mut update_rng = stream(seed, UPDATE_STREAM);
    let mut act_rng = stream(seed, ACT_STREAM);
    let mut episode_rng = stream(seed, EPISODE_STREAM);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, obs_dim, act_dim);
    let mut obs = env.reset(episode_rng.next_u64())?;

    let mut interact = |env: &mut dyn Environment, obs: &mut Vec<f64>, action: Vec<f64>, buffer: &mut ReplayBuffer| {
        let (next, reward, done) = env.step(&action)?;
        buffer.push(&Transition { obs: obs.clone(), action, reward, next_obs: next.clone(), done })?;
        *obs = if done { env.reset(episode_rng.next_u64())? } else { next };
        Ok::<(), Error>(())
    };

    for _ in 0..cfg.warmup_steps {
        let action: Vec<f64> = (0..act_dim).map(|_| act_rng.random::<f64>()).collect();
        interact(env, &mut obs, action, &mut buffer)?;
    }
    for step in 1..=total_steps {
        let t0 = Instant::now();
        let action = agent.act_stochastic(&obs, &mut act_rng);
        interact(env, &mut obs, action, &mut buffer)?;
        let env_ms = ms(t0);
        let t1 = Instant::now();
        let batch = buffer.sample(cfg.batch_size, &mut update_rng);
        let stats = sac_update(&mut agent, &batch, cfg, &mut update_rng)
            .map_err(|e| Error::Numeric(format!("SAC update at step {step}: {e}")))?;
        let update_ms = ms(t1);
        let eval_return = maybe_evaluate(&mut evaluator, cfg.eval_interval, step, &agent)?;
        log.push(LogRow { step, stats, eval_return, env_ms, update_ms, wall_ms: ms(start) });
    }
    Ok(TrainOutput { agent, log })
}

/// Offline CQL on a fixed set of transitions. Only the optional evaluator ever
/// touches an environment, and it does not count towards the steps.
pub fn train_offline(
    transitions: &[Transition],
    cfg: &CqlConfig,
    total_steps: u64,
    seed: u64,
    mut evaluator: Option<&mut dyn Evaluator>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let buffer = ReplayBuffer::from_transitions(transitions)?;
    let first = &transitions[0];
    let mut agent = initial_agent(seed, first.obs.len(), first.action.len(), cfg.alpha.max(f64::MIN_POSITIVE));
    let mut log = TrainLog::default();
    let start = Instant::now();
    if let Some(e) = maybe_evaluate(&mut evaluator, cfg.eval_interval, 0, &agent)? {
        log.push(LogRow { step: 0, eval_return: Some(e), wall_ms: ms(start), ..Default::default() });
    }
    let mut update_rng = stream(seed, UPDATE_STREAM);
    for step in 1..=total_steps {
        let t1 = Instant::now();
        let batch = buffer.sample(cfg.batch_size, &mut update_rng);
        let stats = cql_update(&mut agent, &batch, cfg, &mut update_rng)
            .map_err(|e| Error::Numeric(format!("CQL update at step {step}: {e}")))?;
        let update_ms = ms(t1);
        let eval_return = maybe_evaluate(&mut evaluator, cfg.eval_interval, step, &agent)?;
        log.push(LogRow { step, stats, eval_return, env_ms: 0.0, update_ms, wall_ms: ms(start) });
    }
    Ok(TrainOutput { agent, log })
}
