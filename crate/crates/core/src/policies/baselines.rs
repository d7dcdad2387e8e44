//! The two closed-form behavior policies.
//!
//! Both normalise over the prioritized slices only and return `1/N` per
//! prioritized slice on the first decision of an episode.

use rand::RngCore;

use super::Policy;
use crate::env::Observation;
use crate::sim::SliceMetrics;

/// Default stabiliser in the load-proportional denominator.
pub const LOAD_DELTA: f64 = 1e-6;

/// `a_i = T_tx,i / (sum_j T_tx,j + delta)` over prioritized slices.
pub fn load_based(prev_t_tx: &[f64], delta: f64) -> Vec<f64> {
    let denom: f64 = prev_t_tx.iter().sum::<f64>() + delta;
    prev_t_tx.iter().map(|t| t / denom).collect()
}

/// Softmax of the previous delay-violation rates over prioritized slices.
pub fn delay_based(prev_d_vio: &[f64]) -> Vec<f64> {
    // inputs live in [0,1], so exp cannot overflow; no max-shift needed
    let exps: Vec<f64> = prev_d_vio.iter().map(|d| d.exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Shares used at `t = 0`.
pub fn initial_shares(num_slices: usize) -> Vec<f64> {
    vec![1.0 / num_slices as f64; num_slices - 1]
}

/// What the baselines remember between decisions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineState {
    pub prev_t_tx: Vec<f64>,
    pub prev_d_vio: Vec<f64>,
    pub step_index: usize,
}

impl BaselineState {
    fn observe(&mut self, raw: &[SliceMetrics]) {
        let k = raw.len().saturating_sub(1);
        self.prev_t_tx = raw[..k].iter().map(|m| m.t_tx).collect();
        self.prev_d_vio = raw[..k].iter().map(|m| m.d_vio).collect();
    }
}

#[derive(Debug, Clone)]
pub struct LoadPolicy {
    num_slices: usize,
    delta: f64,
    state: BaselineState,
}

impl LoadPolicy {
    pub fn new(num_slices: usize) -> Self {
        Self::with_delta(num_slices, LOAD_DELTA)
    }

    pub fn with_delta(num_slices: usize, delta: f64) -> Self {
        Self { num_slices, delta, state: BaselineState::default() }
    }
}

impl Policy for LoadPolicy {
    fn name(&self) -> &str {
        "load"
    }

    fn reset(&mut self) {
        self.state = BaselineState::default();
    }

    fn act(&mut self, _obs: &Observation, raw: &[SliceMetrics], _rng: &mut dyn RngCore) -> Vec<f64> {
        // `raw` is the interval that just finished, i.e. t-1 for this decision
        self.state.observe(raw);
        let action = if self.state.step_index == 0 {
            initial_shares(self.num_slices)
        } else {
            load_based(&self.state.prev_t_tx, self.delta)
        };
        self.state.step_index += 1;
        action
    }
}

#[derive(Debug, Clone)]
pub struct DelayPolicy {
    num_slices: usize,
    state: BaselineState,
}

impl DelayPolicy {
    pub fn new(num_slices: usize) -> Self {
        Self { num_slices, state: BaselineState::default() }
    }
}

impl Policy for DelayPolicy {
    fn name(&self) -> &str {
        "delay"
    }

    fn reset(&mut self) {
        self.state = BaselineState::default();
    }

    fn act(&mut self, _obs: &Observation, raw: &[SliceMetrics], _rng: &mut dyn RngCore) -> Vec<f64> {
        // `raw` is the interval that just finished, i.e. t-1 for this decision
        self.state.observe(raw);
        let action = if self.state.step_index == 0 {
            initial_shares(self.num_slices)
        } else {
            delay_based(&self.state.prev_d_vio)
        };
        self.state.step_index += 1;
        action
    }
}

/// Same shares every step. Handy for symmetry checks.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    name: String,
    shares: Vec<f64>,
}

impl FixedPolicy {
    pub fn new(name: impl Into<String>, shares: Vec<f64>) -> Self {
        Self { name: name.into(), shares }
    }

    pub fn uniform(num_slices: usize) -> Self {
        Self::new("uniform", initial_shares(num_slices))
    }
}

impl Policy for FixedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, _obs: &Observation, _raw: &[SliceMetrics], _rng: &mut dyn RngCore) -> Vec<f64> {
        self.shares.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn load_hand_example() {
        let a = load_based(&[2.0, 6.0], 1e-6);
        assert!((a[0] - 0.25).abs() < 1e-6 && (a[1] - 0.75).abs() < 1e-6);
        assert_eq!(load_based(&[0.0, 0.0], 1e-6), vec![0.0, 0.0]);
    }

    #[test]
    fn delay_hand_example() {
        assert_eq!(delay_based(&[0.0, 0.0]), vec![0.5, 0.5]);
        let e = std::f64::consts::E;
        let a = delay_based(&[1.0, 0.0]);
        assert!((a[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((a[0] - 0.7311).abs() < 1e-4 && (a[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn first_decision_is_one_over_n() {
        let raw = [SliceMetrics { t_tx: 3.0, d_vio: 0.5, ..Default::default() }; 3];
        let obs = Observation(vec![0.0; 15]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for mut p in [Box::new(LoadPolicy::new(3)) as Box<dyn Policy>, Box::new(DelayPolicy::new(3))] {
            assert_eq!(p.act(&obs, &raw, &mut rng), vec![1.0 / 3.0; 2]);
            let second = p.act(&obs, &raw, &mut rng);
            assert_ne!(second, vec![1.0 / 3.0; 2]);
            p.reset();
            assert_eq!(p.act(&obs, &raw, &mut rng), vec![1.0 / 3.0; 2]);
        }
    }

    #[test]
    fn background_slice_is_ignored() {
        let raw = [
            SliceMetrics { t_tx: 2.0, d_vio: 0.0, ..Default::default() },
            SliceMetrics { t_tx: 6.0, d_vio: 1.0, ..Default::default() },
            SliceMetrics { t_tx: 100.0, d_vio: 1.0, ..Default::default() },
        ];
        let obs = Observation(vec![0.0; 15]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = LoadPolicy::new(3);
        p.act(&obs, &raw, &mut rng);
        let a = p.act(&obs, &raw, &mut rng);
        assert!((a[0] - 0.25).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn load_shares_sum_below_one(loads in prop::collection::vec(0.0f64..100.0, 1..6)) {
            let a = load_based(&loads, LOAD_DELTA);
            prop_assert!(a.iter().sum::<f64>() < 1.0);
            prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn load_shares_lose_scale_sensitivity_as_loads_grow(
            loads in prop::collection::vec(0.1f64..10.0, 2..5),
        ) {
            // the Delta term is the only scale dependence, so scaled shares
            // approach the exact proportions
            let total: f64 = loads.iter().sum();
            let base: Vec<f64> = loads.iter().map(|l| l / total).collect();
            let mut prev_gap = f64::INFINITY;
            for c in [1e1, 1e3, 1e5] {
                let scaled: Vec<f64> = loads.iter().map(|l| l * c).collect();
                let gap = load_based(&scaled, LOAD_DELTA)
                    .iter()
                    .zip(&base)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                prop_assert!(gap <= prev_gap + 1e-15);
                prev_gap = gap;
            }
            prop_assert!(prev_gap < 1e-9);
        }

        #[test]
        fn delay_shares_are_a_distribution_with_matching_argmax(
            vio in prop::collection::vec(0.0f64..=1.0, 1..6),
        ) {
            let a = delay_based(&vio);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
            prop_assert_eq!(a[argmax(&a)], a[argmax(&vio)]);
        }
    }
}
