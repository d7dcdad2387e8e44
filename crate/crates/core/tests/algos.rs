mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slicelab::algos::{
    cql_update, train_offline, train_online, Checkpoint, CqlConfig, QuadraticBandit, ReplayBuffer, SacConfig,
    Transition,
};

#[test]
fn critic_mse_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let e = common::critic_mse_error(seed);
        assert!(e <= 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn cql_penalty_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let e = common::cql_penalty_error(seed);
        assert!(e <= 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn actor_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let e = common::actor_loss_error(seed);
        assert!(e <= 1e-4, "seed {seed}: {e}");
    }
}

fn bandit_data(n: usize) -> Vec<Transition> {
    (0..n)
        .map(|i| {
            let a = i as f64 / n as f64;
            Transition { obs: vec![1.0], action: vec![a], reward: -(a - 0.7) * (a - 0.7), next_obs: vec![1.0], done: true }
        })
        .collect()
}

#[test]
fn training_is_reproducible_per_seed() {
    let cfg = SacConfig { warmup_steps: 50, batch_size: 32, eval_interval: 0, ..SacConfig::default() };
    let run = |seed| {
        let mut env = QuadraticBandit::new(0.7, 1);
        let out = train_online(&mut env, &cfg, 200, seed, None).unwrap();
        Checkpoint::from_agent(&out.agent, "sac", 200, seed).to_json()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));

    let cql = CqlConfig { batch_size: 16, eval_interval: 0, ..CqlConfig::default() };
    let data = bandit_data(64);
    let a = train_offline(&data, &cql, 100, 1, None).unwrap();
    let b = train_offline(&data, &cql, 100, 1, None).unwrap();
    assert_eq!(a.log.deterministic_view(), b.log.deterministic_view());
    assert_eq!(Checkpoint::from_agent(&a.agent, "cql", 100, 1).weights_hash(), Checkpoint::from_agent(&b.agent, "cql", 100, 1).weights_hash());
}

#[test]
fn cql_keeps_q_values_of_unseen_actions_below_data_actions() {
    // Data only at a = 0.2, so the conservative critic should value it above
    // the unsupported far end of the action range.
    let data: Vec<Transition> = (0..64)
        .map(|_| Transition { obs: vec![1.0], action: vec![0.2], reward: 0.0, next_obs: vec![1.0], done: true })
        .collect();
    let buffer = ReplayBuffer::from_transitions(&data).unwrap();
    let cfg = CqlConfig { batch_size: 32, critic_lr: 1e-3, ..CqlConfig::default() };
    let mut agent = slicelab::algos::initial_agent(0, 1, 1, cfg.alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..500 {
        let batch = buffer.sample(cfg.batch_size, &mut rng);
        cql_update(&mut agent, &batch, &cfg, &mut rng).unwrap();
    }
    let q = |a: f32| {
        let x = slicelab_nn::Tensor::matrix(1, 2, vec![1.0f32, a]).unwrap();
        agent.critics[0].forward(&x).unwrap().data()[0]
    };
    assert!(q(0.2) > q(0.95), "q(0.2)={} q(0.95)={}", q(0.2), q(0.95));
}
