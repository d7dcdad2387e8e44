//! Tanh-squashed diagonal Gaussian rescaled onto the unit box.
//!
//! A head output row is `[mean_1..mean_d, log_std_1..log_std_d]`. Sampling
//! draws `u = mean + exp(log_std) * eps`, maps it to `a = (tanh(u) + 1) / 2`
//! and reports `log pi(a)` as a density on `[0,1]^d`, i.e. including the tanh
//! Jacobian and the factor 1/2 of the affine map.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Real, Tensor};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 - tanh(u)^2)`, stable for large |u|.
fn log_one_minus_tanh_sq<R: Real>(u: R) -> R {
    let two = R::lit(2.0);
    let x = -two * u;
    let softplus = if x > R::zero() { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    two * (R::lit(std::f64::consts::LN_2) - u - softplus)
}

/// One batch of reparameterised draws, with what the reverse pass needs.
#[derive(Debug, Clone)]
pub struct SquashedSample<R> {
    pub dim: usize,
    /// `rows x dim`, entries in (0, 1).
    pub actions: Vec<R>,
    /// One log-density per row.
    pub log_probs: Vec<R>,
    pre_tanh: Vec<R>,
    std: Vec<R>,
    noise: Vec<R>,
    clamped: Vec<bool>,
}

impl<R: Real> SquashedSample<R> {
    pub fn rows(&self) -> usize {
        self.log_probs.len()
    }

    pub fn action_row(&self, i: usize) -> &[R] {
        &self.actions[i * self.dim..(i + 1) * self.dim]
    }

    /// Gradient with respect to the head output given upstream gradients for
    /// the actions (`rows x dim`) and the log-probabilities (`rows`).
    pub fn backward(&self, d_actions: &[R], d_log_probs: &[R]) -> Tensor<R> {
        let (rows, d) = (self.rows(), self.dim);
        assert_eq!(d_actions.len(), rows * d);
        assert_eq!(d_log_probs.len(), rows);
        let two = R::lit(2.0);
        let half = R::lit(0.5);
        let mut grad = vec![R::zero(); rows * 2 * d];
        for r in 0..rows {
            let dl = d_log_probs[r];
            for j in 0..d {
                let k = r * d + j;
                let th = self.pre_tanh[k].tanh();
                let da_du = half * (R::one() - th * th);
                let du = d_actions[k] * da_du + dl * two * th;
                grad[r * 2 * d + j] = du;
                if !self.clamped[k] {
                    let sigma_eps = self.std[k] * self.noise[k];
                    grad[r * 2 * d + d + j] = du * sigma_eps - dl;
                }
            }
        }
        Tensor::matrix(rows, 2 * d, grad).expect("head gradient shape")
    }
}

fn split_head<R: Real>(head: &Tensor<R>) -> usize {
    let cols = head.cols();
    assert!(cols % 2 == 0 && cols > 0, "policy head must hold mean and log-std halves");
    cols / 2
}

fn clamp_log_std<R: Real>(raw: R) -> (R, bool) {
    let (lo, hi) = (R::lit(LOG_STD_MIN), R::lit(LOG_STD_MAX));
    if raw < lo {
        (lo, true)
    } else if raw > hi {
        (hi, true)
    } else {
        (raw, false)
    }
}

/// Squash a pre-tanh value into the open unit interval.
pub fn squash<R: Real>(u: R) -> R {
    let half = R::lit(0.5);
    let a = half * (u.tanh() + R::one());
    let eps = R::epsilon();
    a.max(eps).min(R::one() - eps)
}

/// Reparameterised sample using caller-provided standard normal noise
/// (`rows x dim`).
pub fn sample_with_noise<R: Real>(head: &Tensor<R>, noise: &[R]) -> SquashedSample<R> {
    let d = split_head(head);
    let rows = head.rows();
    assert_eq!(noise.len(), rows * d, "noise must be rows x action_dim");
    let mut s = SquashedSample {
        dim: d,
        actions: Vec::with_capacity(rows * d),
        log_probs: Vec::with_capacity(rows),
        pre_tanh: Vec::with_capacity(rows * d),
        std: Vec::with_capacity(rows * d),
        noise: noise.to_vec(),
        clamped: Vec::with_capacity(rows * d),
    };
    let ln2 = R::lit(std::f64::consts::LN_2);
    let half = R::lit(0.5);
    for r in 0..rows {
        let row = head.row(r);
        let mut lp = R::zero();
        for j in 0..d {
            let (log_std, clamped) = clamp_log_std(row[d + j]);
            let std = log_std.exp();
            let eps = noise[r * d + j];
            let u = row[j] + std * eps;
            lp += -half * eps * eps - log_std - R::lit(HALF_LN_2PI) - log_one_minus_tanh_sq(u) + ln2;
            s.actions.push(squash(u));
            s.pre_tanh.push(u);
            s.std.push(std);
            s.clamped.push(clamped);
        }
        s.log_probs.push(lp);
    }
    s
}

/// Draw standard normal noise and sample.
pub fn sample<R: Real, G: Rng + ?Sized>(head: &Tensor<R>, rng: &mut G) -> SquashedSample<R> {
    let d = split_head(head);
    let noise: Vec<R> =
        (0..head.rows() * d).map(|_| R::lit(rng.sample::<f64, _>(StandardNormal))).collect();
    sample_with_noise(head, &noise)
}

/// Zero-variance action `(tanh(mean) + 1) / 2`, row-major `rows x dim`.
pub fn deterministic<R: Real>(head: &Tensor<R>) -> Vec<R> {
    let d = split_head(head);
    (0..head.rows()).flat_map(|r| head.row(r)[..d].iter().map(|&m| squash(m)).collect::<Vec<_>>()).collect()
}

/// Log-density on `[0,1]^d` of a given action for one head row.
pub fn log_prob_of(head_row: &[f64], action: &[f64]) -> f64 {
    let d = head_row.len() / 2;
    assert_eq!(action.len(), d);
    let mut lp = 0.0;
    for j in 0..d {
        let (log_std, _) = clamp_log_std(head_row[d + j]);
        let u = (2.0 * action[j] - 1.0).atanh();
        let eps = (u - head_row[j]) / log_std.exp();
        lp += -0.5 * eps * eps - log_std - HALF_LN_2PI - log_one_minus_tanh_sq(u) + std::f64::consts::LN_2;
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn near_zero_variance_collapses_to_squashed_mean() {
        let head = Tensor::<f64>::matrix(2, 4, vec![0.3, -1.2, -20.0, -25.0, 2.0, 0.0, -20.0, -20.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample(&head, &mut rng);
        let det = deterministic(&head);
        for (a, b) in s.actions.iter().zip(&det) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!((det[0] - (0.3f64.tanh() + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_mean_of_centered_policy_is_one_half() {
        let head = Tensor::<f64>::matrix(100_000, 2, [0.0, 0.0].repeat(100_000)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let s = sample(&head, &mut rng);
        let mean = s.actions.iter().sum::<f64>() / s.actions.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn density_integrates_to_one_on_unit_interval() {
        for head in [[0.0, 0.0], [0.8, -0.5], [-1.5, 0.7]] {
            // midpoint rule on a fine grid; the density vanishes at both ends
            let n = 200_000;
            let h = 1.0 / n as f64;
            let total: f64 = (0..n).map(|i| log_prob_of(&head, &[(i as f64 + 0.5) * h]).exp() * h).sum();
            assert!((total - 1.0).abs() < 1e-2, "head {head:?}: {total}");
        }
    }

    #[test]
    fn sampled_log_prob_matches_closed_form_density() {
        let head = Tensor::<f64>::matrix(1, 4, vec![0.4, -0.3, -0.7, 0.1]).unwrap();
        let s = sample_with_noise(&head, &[0.9, -1.3]);
        let direct = log_prob_of(head.row(0), s.action_row(0));
        assert!((direct - s.log_probs[0]).abs() < 1e-9);
    }

    #[test]
    fn actions_stay_strictly_inside_the_box() {
        let head = Tensor::<f32>::matrix(1, 2, vec![40.0, 2.0]).unwrap();
        let s = sample_with_noise(&head, &[5.0]);
        assert!(s.actions[0] < 1.0 && s.actions[0] > 0.0);
        let head = Tensor::<f32>::matrix(1, 2, vec![-40.0, 2.0]).unwrap();
        assert!(deterministic(&head)[0] > 0.0);
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let head = vec![0.2, -0.6, -0.4, 0.3];
        let noise = [0.7, -1.1];
        let (wa, wl) = ([0.3, -1.7], 0.45);
        let objective = |h: &[f64]| {
            let s = sample_with_noise(&Tensor::matrix(1, 4, h.to_vec()).unwrap(), &noise);
            wa[0] * s.actions[0] + wa[1] * s.actions[1] + wl * s.log_probs[0]
        };
        let s = sample_with_noise(&Tensor::matrix(1, 4, head.clone()).unwrap(), &noise);
        let g = s.backward(&wa, &[wl]);
        for i in 0..4 {
            let mut hp = head.clone();
            let mut hm = head.clone();
            hp[i] += 1e-5;
            hm[i] -= 1e-5;
            let fd = (objective(&hp) - objective(&hm)) / 2e-5;
            assert!((fd - g.data()[i]).abs() < 1e-7, "coord {i}: {fd} vs {}", g.data()[i]);
        }
    }
}
