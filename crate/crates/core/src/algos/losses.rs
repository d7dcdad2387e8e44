//! Scalar losses of the actor-critic updates with their parameter gradients.
//!
//! Everything is generic over [`Real`] so the trainers run in `f32` while the
//! gradient checks run the very same code in `f64`.

use slicelab_nn::gaussian::{sample_with_noise, SquashedSample};
use slicelab_nn::{Mlp, Real, Tensor};

use crate::error::{Error, Result};

/// `[obs | action]` rows for a critic.
pub fn critic_inputs<R: Real>(obs: &[R], actions: &[R], obs_dim: usize, act_dim: usize) -> Tensor<R> {
    let rows = obs.len() / obs_dim;
    assert_eq!(actions.len(), rows * act_dim, "one action per observation");
    let mut data = Vec::with_capacity(rows * (obs_dim + act_dim));
    for r in 0..rows {
        data.extend_from_slice(&obs[r * obs_dim..(r + 1) * obs_dim]);
        data.extend_from_slice(&actions[r * act_dim..(r + 1) * act_dim]);
    }
    Tensor::matrix(rows, obs_dim + act_dim, data).expect("critic input shape")
}

/// Append `[obs_b | action_{b,k}]` rows for every observation `b` and its `k`
/// sampled actions (`actions` is `rows * k x act_dim`, grouped by `b`).
fn push_repeated<R: Real>(data: &mut Vec<R>, obs: &[R], actions: &[R], obs_dim: usize, act_dim: usize, k: usize) {
    let rows = obs.len() / obs_dim;
    for b in 0..rows {
        for j in 0..k {
            let i = b * k + j;
            data.extend_from_slice(&obs[b * obs_dim..(b + 1) * obs_dim]);
            data.extend_from_slice(&actions[i * act_dim..(i + 1) * act_dim]);
        }
    }
}

fn log_sum_exp<R: Real>(xs: &[R]) -> R {
    let m = xs.iter().copied().fold(R::neg_infinity(), R::max);
    m + xs.iter().map(|&x| (x - m).exp()).sum::<R>().ln()
}

/// Conservative penalty for one state:
/// `logsumexp_k(q_k - log_density_k) - q_data`.
pub fn cql_gap<R: Real>(sampled_q: &[R], log_density: &[R], q_data: R) -> R {
    let shifted: Vec<R> = sampled_q.iter().zip(log_density).map(|(&q, &l)| q - l).collect();
    log_sum_exp(&shifted) - q_data
}

/// Actions sampled around each state for the conservative penalty.
#[derive(Debug, Clone)]
pub struct CqlSamples<R> {
    /// Samples per state.
    pub per_state: usize,
    /// `rows * per_state x act_dim`, grouped by state.
    pub actions: Vec<R>,
    /// Log-density of the proposal each action came from (held constant).
    pub log_density: Vec<R>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct CriticLoss<R> {
    pub loss: R,
    pub mse: R,
    pub penalty: R,
    pub q_mean: R,
    pub grads: Vec<R>,
}

/// `mean_b (Q(s_b,a_b) - y_b)^2`, plus `weight * mean_b cql_gap` when samples
/// are given. Data rows and sampled rows share one forward pass.
pub fn critic_loss<R: Real>(
    q: &Mlp<R>,
    obs: &[R],
    actions: &[R],
    targets: &[R],
    cql: Option<&CqlSamples<R>>,
) -> Result<CriticLoss<R>> {
    let rows = targets.len();
    let obs_dim = obs.len() / rows;
    let act_dim = q.input_width() - obs_dim;
    let k = cql.map_or(0, |c| c.per_state);
    let width = obs_dim + act_dim;
    let mut data = critic_inputs(obs, actions, obs_dim, act_dim).into_data();
    if let Some(c) = cql {
        data.reserve(rows * k * width);
        push_repeated(&mut data, obs, &c.actions, obs_dim, act_dim, k);
    }
    let total_rows = rows * (1 + k);
    let (out, tape) = q.forward_tape(Tensor::matrix(total_rows, width, data)?)?;
    let qv = out.data();
    let inv_b = R::one() / R::lit(rows as f64);
    let two = R::lit(2.0);

    let mut d_out = vec![R::zero(); total_rows];
    let mut mse = R::zero();
    for b in 0..rows {
        let err = qv[b] - targets[b];
        mse += err * err;
        d_out[b] = two * err * inv_b;
    }
    mse *= inv_b;

    let mut penalty = R::zero();
    if let Some(c) = cql {
        let w = R::lit(c.weight);
        let sampled = &qv[rows..];
        for b in 0..rows {
            let qs = &sampled[b * k..(b + 1) * k];
            let ld = &c.log_density[b * k..(b + 1) * k];
            let shifted: Vec<R> = qs.iter().zip(ld).map(|(&q, &l)| q - l).collect();
            let lse = log_sum_exp(&shifted);
            penalty += lse - qv[b];
            for j in 0..k {
                d_out[rows + b * k + j] = w * inv_b * (shifted[j] - lse).exp();
            }
            d_out[b] -= w * inv_b;
        }
        penalty *= inv_b;
    }
    let loss = mse + R::lit(cql.map_or(0.0, |c| c.weight)) * penalty;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("critic loss is {loss}")));
    }
    let mut grads = vec![R::zero(); q.param_count()];
    q.backward(&tape, &Tensor::matrix(total_rows, 1, d_out)?, &mut grads, false);
    let q_mean = qv[..rows].iter().copied().sum::<R>() * inv_b;
    Ok(CriticLoss { loss, mse, penalty, q_mean, grads })
}

#[derive(Debug, Clone)]
pub struct ActorLoss<R> {
    pub loss: R,
    pub mean_log_prob: R,
    pub grads: Vec<R>,
}

/// `mean_b (alpha log pi(a_b|s_b) - min_k Q_k(s_b, a_b))` with `a_b` drawn by
/// reparameterisation from the given standard normal noise.
pub fn actor_loss<R: Real>(
    actor: &Mlp<R>,
    critics: [&Mlp<R>; 2],
    obs: &[R],
    noise: &[R],
    alpha: R,
) -> Result<ActorLoss<R>> {
    let obs_dim = actor.input_width();
    let rows = obs.len() / obs_dim;
    let act_dim = actor.output_width() / 2;
    let (head, actor_tape) = actor.forward_tape(Tensor::matrix(rows, obs_dim, obs.to_vec())?)?;
    let sample: SquashedSample<R> = sample_with_noise(&head, noise);
    let inputs = critic_inputs(obs, &sample.actions, obs_dim, act_dim);
    let (q1, t1) = critics[0].forward_tape(inputs.clone())?;
    let (q2, t2) = critics[1].forward_tape(inputs)?;

    let inv_b = R::one() / R::lit(rows as f64);
    let mut loss = R::zero();
    let mut d1 = vec![R::zero(); rows];
    let mut d2 = vec![R::zero(); rows];
    for b in 0..rows {
        let (a, c) = (q1.data()[b], q2.data()[b]);
        let q_min = if a <= c {
            d1[b] = -inv_b;
            a
        } else {
            d2[b] = -inv_b;
            c
        };
        loss += alpha * sample.log_probs[b] - q_min;
    }
    loss *= inv_b;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("actor loss is {loss}")));
    }
    let g1 = critics[0].input_grad(&t1, &Tensor::matrix(rows, 1, d1)?);
    let g2 = critics[1].input_grad(&t2, &Tensor::matrix(rows, 1, d2)?);
    let mut d_actions = Vec::with_capacity(rows * act_dim);
    for b in 0..rows {
        for j in 0..act_dim {
            d_actions.push(g1.row(b)[obs_dim + j] + g2.row(b)[obs_dim + j]);
        }
    }
    let d_log_probs = vec![alpha * inv_b; rows];
    let d_head = sample.backward(&d_actions, &d_log_probs);
    let mut grads = vec![R::zero(); actor.param_count()];
    actor.backward(&actor_tape, &d_head, &mut grads, false);
    let mean_log_prob = sample.log_probs.iter().copied().sum::<R>() * inv_b;
    Ok(ActorLoss { loss, mean_log_prob, grads })
}

/// Temperature loss `-log_alpha * (mean_log_prob + target_entropy)` and its
/// derivative in `log_alpha`.
pub fn temperature_loss(log_alpha: f64, mean_log_prob: f64, target_entropy: f64) -> (f64, f64) {
    let g = -(mean_log_prob + target_entropy);
    (log_alpha * g, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_q_values_give_log_k() {
        for k in [1usize, 4, 10] {
            let q = vec![3.25f64; k];
            let gap = cql_gap(&q, &vec![0.0; k], 3.25);
            assert!((gap - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_is_nonnegative_when_data_action_is_among_samples() {
        let q = [0.3f64, -1.0, 2.0, 0.7];
        for &qd in &q {
            assert!(cql_gap(&q, &[0.0; 4], qd) >= 0.0);
        }
    }

    #[test]
    fn temperature_gradient_sign() {
        // entropy below target (log prob high) pushes log_alpha up
        let (_, g) = temperature_loss(0.0, 2.0, -1.0);
        assert!(g < 0.0);
    }
}
