//! Actor, twin critics and their optimizers, plus the SAC and CQL updates.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use slicelab_nn::gaussian::{deterministic, sample, sample_with_noise};
use slicelab_nn::{Adam, Mlp, Tensor, HIDDEN_WIDTH};

use super::losses::{actor_loss, critic_inputs, critic_loss, temperature_loss, CqlSamples};
use super::replay::Batch;
use crate::error::{Error, Result};

/// Final actor layer scale, so initial allocations start near 1/2.
pub const ACTOR_OUTPUT_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    /// Freeze the temperature instead of tuning it.
    pub fixed_alpha: Option<f64>,
    /// Defaults to `-action_dim`.
    pub target_entropy: Option<f64>,
    pub replay_capacity: usize,
    /// Uniform-random environment steps before learning starts. They are not
    /// training steps.
    pub warmup_steps: usize,
    /// Training steps between evaluations; 0 disables them.
    pub eval_interval: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            critic_lr: 1e-3,
            actor_lr: 3e-4,
            alpha_lr: 3e-4,
            initial_alpha: 0.2,
            fixed_alpha: None,
            target_entropy: None,
            replay_capacity: 100_000,
            warmup_steps: 1_000,
            eval_interval: 1_000,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.gamma, self.tau, self.batch_size, self.critic_lr, self.actor_lr)?;
        if self.replay_capacity == 0 {
            return Err(Error::config("replay_capacity must be positive"));
        }
        if let Some(a) = self.fixed_alpha {
            if !(a >= 0.0) {
                return Err(Error::config("fixed_alpha must be non-negative"));
            }
        }
        if !(self.initial_alpha > 0.0) {
            return Err(Error::config("initial_alpha must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CqlConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub cql_weight: f64,
    pub num_sampled_actions: usize,
    /// Fixed entropy temperature of the actor.
    pub alpha: f64,
    /// Training steps between evaluations; 0 disables them.
    pub eval_interval: usize,
}

impl Default for CqlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            critic_lr: 3e-4,
            actor_lr: 5e-5,
            cql_weight: 5.0,
            num_sampled_actions: 10,
            alpha: 0.05,
            eval_interval: 1_000,
        }
    }
}

impl CqlConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.gamma, self.tau, self.batch_size, self.critic_lr, self.actor_lr)?;
        if !(self.cql_weight >= 0.0) {
            return Err(Error::config("cql_weight must be non-negative"));
        }
        if self.num_sampled_actions == 0 {
            return Err(Error::config("num_sampled_actions must be at least 1"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::config("alpha must be non-negative"));
        }
        Ok(())
    }
}

fn check_common(gamma: f64, tau: f64, batch: usize, critic_lr: f64, actor_lr: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config(format!("gamma must lie in (0,1), got {gamma}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::config(format!("tau must lie in (0,1], got {tau}")));
    }
    if batch == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    if !(critic_lr > 0.0 && actor_lr > 0.0) {
        return Err(Error::config("learning rates must be positive"));
    }
    Ok(())
}

/// Diagnostics of one gradient update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub cql_penalty: f64,
    pub q_mean: f64,
    pub alpha: f64,
    pub log_prob: f64,
}

/// Networks and optimizer state of one actor-critic learner.
#[derive(Debug, Clone)]
pub struct Agent {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub actor: Mlp<f32>,
    pub critics: [Mlp<f32>; 2],
    pub targets: [Mlp<f32>; 2],
    pub log_alpha: f64,
    actor_opt: Adam<f32>,
    critic_opt: [Adam<f32>; 2],
    alpha_opt: Adam<f64>,
    updates: u64,
}

impl Agent {
    pub fn new<G: Rng + ?Sized>(obs_dim: usize, act_dim: usize, initial_alpha: f64, rng: &mut G) -> Self {
        let actor = Mlp::init(obs_dim, HIDDEN_WIDTH, 2 * act_dim, ACTOR_OUTPUT_SCALE, rng);
        let q1 = Mlp::init(obs_dim + act_dim, HIDDEN_WIDTH, 1, 1.0, rng);
        let q2 = Mlp::init(obs_dim + act_dim, HIDDEN_WIDTH, 1, 1.0, rng);
        Self::from_networks(actor, [q1, q2], initial_alpha.ln())
    }

    /// Fresh optimizers around existing networks; targets start as copies.
    pub fn from_networks(actor: Mlp<f32>, critics: [Mlp<f32>; 2], log_alpha: f64) -> Self {
        let obs_dim = actor.input_width();
        let act_dim = actor.output_width() / 2;
        Self {
            obs_dim,
            act_dim,
            actor_opt: Adam::new(actor.param_count()),
            critic_opt: [Adam::new(critics[0].param_count()), Adam::new(critics[1].param_count())],
            alpha_opt: Adam::new(1),
            targets: critics.clone(),
            critics,
            actor,
            log_alpha,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Squashed mean action for one observation.
    pub fn act_deterministic(&self, obs: &[f64]) -> Vec<f64> {
        let head = self.head(obs);
        deterministic(&head).into_iter().map(f64::from).collect()
    }

    pub fn act_stochastic(&self, obs: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let head = self.head(obs);
        sample(&head, rng).actions.into_iter().map(f64::from).collect()
    }

    fn head(&self, obs: &[f64]) -> Tensor<f32> {
        let x = Tensor::matrix(1, obs.len(), obs.iter().map(|&v| v as f32).collect()).expect("observation row");
        self.actor.forward(&x).expect("observation width matches the actor")
    }

    /// `y = r + gamma (1 - done) (min_k Q'_k(s', a') - alpha log pi(a'|s'))`.
    fn critic_targets(&self, batch: &Batch, gamma: f64, alpha: f64, rng: &mut dyn RngCore) -> Result<Vec<f32>> {
        let rows = batch.len();
        let head = self.actor.forward(&Tensor::matrix(rows, self.obs_dim, batch.next_obs.clone())?)?;
        let next = sample_with_noise(&head, &normal_noise(rows * self.act_dim, rng));
        let inputs = critic_inputs(&batch.next_obs, &next.actions, self.obs_dim, self.act_dim);
        let q1 = self.targets[0].forward(&inputs)?;
        let q2 = self.targets[1].forward(&inputs)?;
        Ok((0..rows)
            .map(|b| {
                let soft = q1.data()[b].min(q2.data()[b]) as f64 - alpha * next.log_probs[b] as f64;
                td_target(batch.rewards[b] as f64, batch.dones[b], gamma, soft) as f32
            })
            .collect())
    }

    fn critic_step(
        &mut self,
        batch: &Batch,
        targets: &[f32],
        cql: Option<&CqlSamples<f32>>,
        lr: f64,
    ) -> Result<(f64, f64, f64)> {
        let (mut loss, mut penalty, mut q_mean) = (0.0, 0.0, 0.0);
        for k in 0..2 {
            let out = critic_loss(&self.critics[k], &batch.obs, &batch.actions, targets, cql)?;
            self.critic_opt[k].step(self.critics[k].params_mut(), &out.grads, lr);
            loss += out.loss as f64 / 2.0;
            penalty += out.penalty as f64 / 2.0;
            q_mean += out.q_mean as f64 / 2.0;
        }
        Ok((loss, penalty, q_mean))
    }

    fn actor_step(&mut self, batch: &Batch, alpha: f64, lr: f64, rng: &mut dyn RngCore) -> Result<(f64, f64)> {
        let noise = normal_noise(batch.len() * self.act_dim, rng);
        let out = actor_loss(&self.actor, [&self.critics[0], &self.critics[1]], &batch.obs, &noise, alpha as f32)?;
        self.actor_opt.step(self.actor.params_mut(), &out.grads, lr);
        Ok((out.loss as f64, out.mean_log_prob as f64))
    }

    fn soft_update_targets(&mut self, tau: f64) {
        for k in 0..2 {
            self.targets[k].soft_update_from(&self.critics[k], tau as f32);
        }
    }

    /// Proposal actions for the conservative penalty: half uniform on the unit
    /// box, the rest from the current policy, grouped per state.
    fn cql_samples(&self, batch: &Batch, per_state: usize, weight: f64, rng: &mut dyn RngCore) -> Result<CqlSamples<f32>> {
        let rows = batch.len();
        let d = self.act_dim;
        let n_uniform = per_state / 2 + per_state % 2;
        let n_policy = per_state - n_uniform;
        let head = self.actor.forward(&Tensor::matrix(rows, self.obs_dim, batch.obs.clone())?)?;
        let mut repeated = Vec::with_capacity(rows * n_policy * 2 * d);
        for b in 0..rows {
            for _ in 0..n_policy {
                repeated.extend_from_slice(head.row(b));
            }
        }
        let policy = sample_with_noise(
            &Tensor::matrix(rows * n_policy, 2 * d, repeated)?,
            &normal_noise(rows * n_policy * d, rng),
        );
        let mut actions = Vec::with_capacity(rows * per_state * d);
        let mut log_density = Vec::with_capacity(rows * per_state);
        for b in 0..rows {
            for _ in 0..n_uniform {
                actions.extend((0..d).map(|_| rng.random::<f32>()));
                log_density.push(0.0);
            }
            for j in 0..n_policy {
                let i = b * n_policy + j;
                actions.extend_from_slice(policy.action_row(i));
                log_density.push(policy.log_probs[i]);
            }
        }
        Ok(CqlSamples { per_state, actions, log_density, weight })
    }
}

pub fn td_target(reward: f64, done: bool, gamma: f64, next_value: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * next_value
    }
}

fn normal_noise(len: usize, rng: &mut dyn RngCore) -> Vec<f32> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
}

/// One SAC update: twin-critic regression, actor step, temperature step and
/// Polyak averaging of the targets.
pub fn sac_update(agent: &mut Agent, batch: &Batch, cfg: &SacConfig, rng: &mut dyn RngCore) -> Result<UpdateStats> {
    let alpha = cfg.fixed_alpha.unwrap_or_else(|| agent.alpha());
    let targets = agent.critic_targets(batch, cfg.gamma, alpha, rng)?;
    let (critic_loss, _, q_mean) = agent.critic_step(batch, &targets, None, cfg.critic_lr)?;
    let (actor_loss, log_prob) = agent.actor_step(batch, alpha, cfg.actor_lr, rng)?;
    if cfg.fixed_alpha.is_none() {
        let target_entropy = cfg.target_entropy.unwrap_or(-(agent.act_dim as f64));
        let (_, g) = temperature_loss(agent.log_alpha, log_prob, target_entropy);
        let mut la = [agent.log_alpha];
        agent.alpha_opt.step(&mut la, &[g], cfg.alpha_lr);
        agent.log_alpha = la[0];
    }
    agent.soft_update_targets(cfg.tau);
    agent.updates += 1;
    Ok(UpdateStats { critic_loss, actor_loss, cql_penalty: 0.0, q_mean, alpha, log_prob })
}

/// One CQL update: the SAC critic regression plus the conservative penalty,
/// then an actor step at fixed temperature.
pub fn cql_update(agent: &mut Agent, batch: &Batch, cfg: &CqlConfig, rng: &mut dyn RngCore) -> Result<UpdateStats> {
    let targets = agent.critic_targets(batch, cfg.gamma, cfg.alpha, rng)?;
    let samples = if cfg.cql_weight > 0.0 {
        Some(agent.cql_samples(batch, cfg.num_sampled_actions, cfg.cql_weight, rng)?)
    } else {
        None
    };
    let (critic_loss, cql_penalty, q_mean) = agent.critic_step(batch, &targets, samples.as_ref(), cfg.critic_lr)?;
    let (actor_loss, log_prob) = agent.actor_step(batch, cfg.alpha, cfg.actor_lr, rng)?;
    agent.soft_update_targets(cfg.tau);
    agent.updates += 1;
    Ok(UpdateStats { critic_loss, actor_loss, cql_penalty, q_mean, alpha: cfg.alpha, log_prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_hand_example() {
        assert!((td_target(1.0, false, 0.99, 2.0) - 2.98).abs() < 1e-12);
        assert_eq!(td_target(1.0, true, 0.99, 123.0), 1.0);
    }

    #[test]
    fn default_configs_validate() {
        SacConfig::default().validate().unwrap();
        CqlConfig::default().validate().unwrap();
        let bad = SacConfig { gamma: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = CqlConfig { num_sampled_actions: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn random_batch(rng: &mut ChaCha8Rng, rows: usize, obs_dim: usize, act_dim: usize) -> Batch {
        let mut v = |n: usize| (0..n).map(|_| rng.random::<f32>()).collect::<Vec<f32>>();
        Batch {
            obs: v(rows * obs_dim),
            actions: v(rows * act_dim),
            rewards: v(rows),
            next_obs: v(rows * obs_dim),
            dones: (0..rows).map(|i| i % 5 == 0).collect(),
        }
    }

    #[test]
    fn cql_without_penalty_matches_the_sac_critic_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = Agent::new(6, 2, 0.05, &mut rng);
        let batch = random_batch(&mut rng, 32, 6, 2);
        let sac_cfg = SacConfig { critic_lr: 3e-4, actor_lr: 5e-5, fixed_alpha: Some(0.05), ..Default::default() };
        let cql_cfg = CqlConfig { cql_weight: 0.0, ..Default::default() };

        let mut a = base.clone();
        sac_update(&mut a, &batch, &sac_cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut b = base.clone();
        cql_update(&mut b, &batch, &cql_cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.critics, b.critics);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn targets_start_equal_and_track_frozen_mains() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = Agent::new(4, 1, 0.1, &mut rng);
        assert_eq!(agent.targets, agent.critics);
        let mut moved = agent.critics[0].clone();
        moved.params_mut().iter_mut().for_each(|p| *p += 1.0);
        agent.critics[0] = moved;
        let gap = |a: &Agent| {
            a.critics[0].params().iter().zip(a.targets[0].params()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max)
        };
        let mut prev = gap(&agent);
        for _ in 0..20 {
            agent.soft_update_targets(0.1);
            let g = gap(&agent);
            assert!(g < prev);
            prev = g;
        }
        assert!((prev - 0.9f32.powi(20)).abs() < 1e-4);
    }
}
